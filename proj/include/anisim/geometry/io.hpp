#pragma once

// On-disk formats: point CSVs, the scene manifest, training checkpoints, and
// append-only JSONL logs. Floats round-trip exactly (%.17g in CSVs, base64
// little-endian doubles in checkpoints), so a reload never perturbs results.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "anisim/ad/param_store.hpp"
#include "anisim/ad/tensor.hpp"
#include "anisim/errors.hpp"
#include "anisim/geometry/scene.hpp"

namespace anisim::geom {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV point clouds: one "x,y,z" row per point, no header.
// ---------------------------------------------------------------------------

inline void write_csv_points(const std::string& path, const ad::Tensor& pts) {
    check_contract(pts.ndim() == 2 && pts.dim(1) == 3, "write_csv_points: expects [N,3]");
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open for write: " + path);
    char line[128];
    for (std::int64_t i = 0; i < pts.dim(0); ++i) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", pts.data()[3 * i],
                      pts.data()[3 * i + 1], pts.data()[3 * i + 2]);
        f << line;
    }
    if (!f) throw ParseError("write failed: " + path);
}

inline ad::Tensor read_csv_points(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open: " + path);
    std::vector<double> values;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const char* p = line.c_str();
        for (int d = 0; d < 3; ++d) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p) throw ParseError(path + ":" + std::to_string(lineno) + ": bad number");
            values.push_back(v);
            p = end;
            if (d < 2) {
                if (*p != ',')
                    throw ParseError(path + ":" + std::to_string(lineno) + ": expected comma");
                ++p;
            }
        }
    }
    const std::int64_t n = static_cast<std::int64_t>(values.size() / 3);
    return ad::Tensor({n, 3}, std::move(values));
}

// Per-point stiffness table with a fixed header naming the isotropic column
// and the three axis columns.
inline void write_csv_stiffness(const std::string& path, const ad::Tensor& e) {
    check_contract(e.ndim() == 2 && e.dim(1) == 4, "write_csv_stiffness: expects [N,4]");
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open for write: " + path);
    f << "E_iso,E_x,E_y,E_z\n";
    char line[160];
    for (std::int64_t i = 0; i < e.dim(0); ++i) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g\n", e.data()[4 * i],
                      e.data()[4 * i + 1], e.data()[4 * i + 2], e.data()[4 * i + 3]);
        f << line;
    }
    if (!f) throw ParseError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Scene manifest + frames
// ---------------------------------------------------------------------------

inline void save_scene(const std::string& dir, const SceneData& scene) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["name"] = scene.name;
    manifest["num_points"] = scene.num_points();
    manifest["num_frames"] = scene.num_frames();
    manifest["dt"] = scene.dt;
    manifest["tracked"] = scene.tracked;
    manifest["total_volume"] = scene.total_volume;
    manifest["density"] = scene.density;
    manifest["rest_file"] = "rest.csv";
    write_csv_points(dir + "/rest.csv", scene.rest);

    if (scene.trajectories.size() <= 1) {
        json files = json::array();
        if (!scene.trajectories.empty()) {
            for (std::size_t t = 0; t < scene.trajectories[0].size(); ++t) {
                char name[64];
                std::snprintf(name, sizeof(name), "frame_%04zu.csv", t);
                write_csv_points(dir + "/" + name, scene.trajectories[0][t]);
                files.push_back(name);
            }
        }
        manifest["frame_files"] = files;
    } else {
        // several observed motions of the same rest geometry: nested lists
        json all = json::array();
        for (std::size_t r = 0; r < scene.trajectories.size(); ++r) {
            char sub[64];
            std::snprintf(sub, sizeof(sub), "traj_%zu", r);
            fs::create_directories(dir + "/" + sub);
            json files = json::array();
            for (std::size_t t = 0; t < scene.trajectories[r].size(); ++t) {
                char name[96];
                std::snprintf(name, sizeof(name), "%s/frame_%04zu.csv", sub, t);
                write_csv_points(dir + "/" + name, scene.trajectories[r][t]);
                files.push_back(name);
            }
            all.push_back(files);
        }
        manifest["frame_files"] = all;
    }
    std::ofstream f(dir + "/scene.json");
    f << manifest.dump(2) << "\n";
    if (!f) throw ParseError("write failed: " + dir + "/scene.json");
}

inline SceneData load_scene(const std::string& dir) {
    const std::string manifest_path = dir + "/scene.json";
    std::ifstream f(manifest_path);
    if (!f) throw ParseError("cannot open: " + manifest_path);
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }
    SceneData scene;
    try {
        scene.name = manifest.at("name").get<std::string>();
        scene.dt = manifest.at("dt").get<double>();
        scene.tracked = manifest.at("tracked").get<bool>();
        scene.total_volume = manifest.at("total_volume").get<double>();
        scene.density = manifest.at("density").get<double>();
        scene.rest = read_csv_points(dir + "/" + manifest.at("rest_file").get<std::string>());

        const json& files = manifest.at("frame_files");
        auto load_list = [&](const json& list) {
            std::vector<ad::Tensor> frames;
            for (const auto& name : list)
                frames.push_back(read_csv_points(dir + "/" + name.get<std::string>()));
            return frames;
        };
        if (!files.empty() && files[0].is_array()) {
            for (const auto& list : files) scene.trajectories.push_back(load_list(list));
        } else if (!files.empty()) {
            scene.trajectories.push_back(load_list(files));
        }
    } catch (const json::exception& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }

    const std::int64_t n = manifest.at("num_points").get<std::int64_t>();
    const std::int64_t t = manifest.at("num_frames").get<std::int64_t>();
    check_contract(scene.num_points() == n, "scene manifest: num_points mismatch");
    check_contract(scene.num_frames() == t, "scene manifest: num_frames mismatch");
    for (const auto& traj : scene.trajectories) {
        check_contract(static_cast<std::int64_t>(traj.size()) == t,
                       "scene manifest: ragged trajectories");
        for (const auto& frame : traj)
            check_contract(frame.dim(0) == n, "scene manifest: frame size mismatch");
    }
    return scene;
}

// ---------------------------------------------------------------------------
// base64 (RFC 4648, no line wrapping)
// ---------------------------------------------------------------------------

namespace detail {
inline const char* b64_alphabet() {
    return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}
}  // namespace detail

inline std::string base64_encode(const unsigned char* data, std::size_t len) {
    const char* tab = detail::b64_alphabet();
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(tab[(v >> 18) & 63]);
        out.push_back(tab[(v >> 12) & 63]);
        out.push_back(tab[(v >> 6) & 63]);
        out.push_back(tab[v & 63]);
    }
    if (i + 1 == len) {
        const unsigned v = data[i] << 16;
        out.push_back(tab[(v >> 18) & 63]);
        out.push_back(tab[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == len) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(tab[(v >> 18) & 63]);
        out.push_back(tab[(v >> 12) & 63]);
        out.push_back(tab[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
    int rev[256];
    std::fill(std::begin(rev), std::end(rev), -1);
    const char* tab = detail::b64_alphabet();
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(tab[i])] = i;
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    unsigned acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        const int v = rev[static_cast<unsigned char>(c)];
        if (v < 0) throw ParseError("base64: invalid character");
        acc = (acc << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: every named tensor as {shape, base64 doubles} plus a metadata
// object the consumer interprets.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const ad::ParamStore& params,
                            const json& metadata) {
    json doc;
    json blob = json::object();
    for (const auto& [name, value] : params.all()) {
        json entry;
        entry["shape"] = value.shape();
        entry["data"] = base64_encode(reinterpret_cast<const unsigned char*>(value.data()),
                                      static_cast<std::size_t>(value.numel()) * sizeof(double));
        blob[name] = std::move(entry);
    }
    doc["params"] = std::move(blob);
    doc["metadata"] = metadata;
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path);
    f << doc.dump() << "\n";
    if (!f) throw ParseError("write failed: " + path);
}

inline std::pair<ad::ParamStore, json> load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open: " + path);
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    ad::ParamStore params;
    try {
        for (const auto& [name, entry] : doc.at("params").items()) {
            ad::Shape shape = entry.at("shape").get<ad::Shape>();
            std::vector<unsigned char> bytes =
                base64_decode(entry.at("data").get<std::string>());
            if (bytes.size() != static_cast<std::size_t>(ad::shape_numel(shape)) * sizeof(double))
                throw ParseError(path + ": payload size mismatch for '" + name + "'");
            std::vector<double> values(ad::shape_numel(shape));
            std::memcpy(values.data(), bytes.data(), bytes.size());
            params.add(name, ad::Tensor(shape, std::move(values)));
        }
        return {std::move(params), doc.at("metadata")};
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// JSONL logs
// ---------------------------------------------------------------------------

inline void append_jsonl(const std::string& path, const json& record) {
    std::ofstream f(path, std::ios::app);
    f << record.dump() << "\n";
    if (!f) throw ParseError("write failed: " + path);
}

}  // namespace anisim::geom
