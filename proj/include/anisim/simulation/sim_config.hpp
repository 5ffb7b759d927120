#pragma once

// Simulation run description: time stepping, gravity, applied forces, soft
// boundary pins, and an optional penalty floor. Point sets for forces and
// pins can be given as explicit indices or as an axis-aligned box in rest
// space, which the parser resolves to indices up front.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "anisim/ad/tensor.hpp"
#include "anisim/errors.hpp"
#include "anisim/geometry/io.hpp"

namespace anisim::sim {

struct ForceSpec {
    std::vector<std::int64_t> points;
    std::array<double, 3> force{0.0, 0.0, 0.0};  // per point
    std::int64_t frame_begin = 0;                // active on [begin, end)
    std::int64_t frame_end = std::numeric_limits<std::int64_t>::max();

    bool active(std::int64_t frame) const { return frame >= frame_begin && frame < frame_end; }
};

struct BoundarySpec {
    std::vector<std::int64_t> points;
    ad::Tensor targets;  // [len(points), 3]
    double stiffness = 0.0;
};

struct FloorSpec {
    bool enabled = false;
    double height = 0.0;
    std::array<double, 3> normal{0.0, 0.0, 1.0};
    double stiffness = 0.0;
};

struct NewtonConfig {
    std::int64_t max_iters = 25;
    double tol = 1e-6;  // on the reduced gradient norm
    double backtrack = 0.5;
    std::int64_t max_backtracks = 20;
};

struct SimConfig {
    double dt = 1.0 / 60.0;  // frame duration; each frame takes `substeps` implicit steps
    std::int64_t num_frames = 30;
    std::int64_t substeps = 1;
    std::array<double, 3> gravity{0.0, 0.0, 0.0};
    double density = 1.0;  // mass per unit volume, uniform
    double damping = 0.0;  // velocity scale factor (1 - damping*dt) per step
    std::vector<ForceSpec> forces;
    std::vector<BoundarySpec> boundaries;
    FloorSpec floor;
    NewtonConfig newton;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("sim: dt must be positive");
        if (num_frames < 1) throw ConfigError("sim: num_frames must be at least 1");
        if (substeps < 1) throw ConfigError("sim: substeps must be at least 1");
        if (!(density > 0.0)) throw ConfigError("sim: density must be positive");
        if (damping < 0.0) throw ConfigError("sim: damping must be non-negative");
        if (damping * dt >= 1.0) throw ConfigError("sim: damping*dt must stay below 1");
        if (newton.max_iters < 1) throw ConfigError("sim: newton.max_iters must be at least 1");
        if (!(newton.tol > 0.0)) throw ConfigError("sim: newton.tol must be positive");
        if (!(newton.backtrack > 0.0 && newton.backtrack < 1.0))
            throw ConfigError("sim: newton.backtrack must lie in (0,1)");
        if (newton.max_backtracks < 1)
            throw ConfigError("sim: newton.max_backtracks must be at least 1");
        for (const auto& b : boundaries)
            if (b.stiffness < 0.0) throw ConfigError("sim: boundary stiffness must be >= 0");
        if (floor.stiffness < 0.0) throw ConfigError("sim: floor stiffness must be >= 0");
        const double n2 = floor.normal[0] * floor.normal[0] + floor.normal[1] * floor.normal[1] +
                          floor.normal[2] * floor.normal[2];
        if (floor.enabled && !(n2 > 0.0)) throw ConfigError("sim: floor normal must be non-zero");
    }
};

namespace detail {

inline std::array<double, 3> parse_vec3(const geom::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError(std::string("sim: ") + what + " must be a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// Explicit "points" plus anything inside the rest-space "box", deduplicated.
inline std::vector<std::int64_t> parse_point_set(const geom::json& j, const ad::Tensor& rest,
                                                 const char* what) {
    const std::int64_t n = rest.dim(0);
    std::vector<bool> picked(static_cast<std::size_t>(n), false);
    bool any_source = false;
    if (j.contains("points")) {
        any_source = true;
        for (const auto& v : j.at("points")) {
            const std::int64_t i = v.get<std::int64_t>();
            if (i < 0 || i >= n)
                throw ConfigError(std::string("sim: ") + what + " point index out of range");
            picked[static_cast<std::size_t>(i)] = true;
        }
    }
    if (j.contains("box")) {
        any_source = true;
        const auto lo = parse_vec3(j.at("box").at("min"), what);
        const auto hi = parse_vec3(j.at("box").at("max"), what);
        for (std::int64_t i = 0; i < n; ++i) {
            bool inside = true;
            for (int a = 0; a < 3; ++a) {
                const double c = rest.at2(i, a);
                if (c < lo[static_cast<std::size_t>(a)] || c > hi[static_cast<std::size_t>(a)])
                    inside = false;
            }
            if (inside) picked[static_cast<std::size_t>(i)] = true;
        }
    }
    if (!any_source)
        throw ConfigError(std::string("sim: ") + what + " needs \"points\" or \"box\"");
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < n; ++i)
        if (picked[static_cast<std::size_t>(i)]) out.push_back(i);
    if (out.empty()) throw ConfigError(std::string("sim: ") + what + " selects no points");
    return out;
}

}  // namespace detail

// Rest positions are needed to resolve box selectors and "rest" pin targets.
inline SimConfig parse_sim_config(const geom::json& j, const ad::Tensor& rest) {
    check_contract(rest.ndim() == 2 && rest.dim(1) == 3, "parse_sim_config: rest is [N,3]");
    SimConfig cfg;
    try {
        cfg.dt = j.value("dt", cfg.dt);
        cfg.num_frames = j.value("num_frames", cfg.num_frames);
        cfg.substeps = j.value("substeps", cfg.substeps);
        if (j.contains("gravity")) cfg.gravity = detail::parse_vec3(j.at("gravity"), "gravity");
        cfg.density = j.value("density", cfg.density);
        cfg.damping = j.value("damping", cfg.damping);
        if (j.contains("newton")) {
            const auto& n = j.at("newton");
            cfg.newton.max_iters = n.value("max_iters", cfg.newton.max_iters);
            cfg.newton.tol = n.value("tol", cfg.newton.tol);
            cfg.newton.backtrack = n.value("backtrack", cfg.newton.backtrack);
            cfg.newton.max_backtracks = n.value("max_backtracks", cfg.newton.max_backtracks);
        }
        if (j.contains("floor")) {
            const auto& f = j.at("floor");
            cfg.floor.enabled = f.value("enabled", true);
            cfg.floor.height = f.value("height", 0.0);
            cfg.floor.stiffness = f.value("stiffness", 0.0);
            if (f.contains("normal")) cfg.floor.normal = detail::parse_vec3(f.at("normal"), "floor normal");
        }
        for (const auto& spec : j.value("forces", geom::json::array())) {
            ForceSpec fs;
            fs.points = detail::parse_point_set(spec, rest, "force");
            fs.force = detail::parse_vec3(spec.at("force"), "force");
            if (spec.contains("frames")) {
                const auto& w = spec.at("frames");
                if (!w.is_array() || w.size() != 2)
                    throw ConfigError("sim: force frames must be [begin, end)");
                fs.frame_begin = w[0].get<std::int64_t>();
                fs.frame_end = w[1].get<std::int64_t>();
            }
            cfg.forces.push_back(std::move(fs));
        }
        for (const auto& spec : j.value("boundaries", geom::json::array())) {
            BoundarySpec bs;
            bs.points = detail::parse_point_set(spec, rest, "boundary");
            bs.stiffness = spec.at("stiffness").get<double>();
            const std::int64_t m = static_cast<std::int64_t>(bs.points.size());
            bs.targets = ad::Tensor({m, 3});
            if (!spec.contains("targets") || spec.at("targets") == "rest") {
                for (std::int64_t r = 0; r < m; ++r)
                    for (int a = 0; a < 3; ++a)
                        bs.targets.data()[3 * r + a] = rest.at2(bs.points[static_cast<std::size_t>(r)], a);
            } else {
                const auto& t = spec.at("targets");
                if (!t.is_array() || static_cast<std::int64_t>(t.size()) != m)
                    throw ConfigError("sim: boundary targets must match the point count");
                for (std::int64_t r = 0; r < m; ++r) {
                    const auto row = detail::parse_vec3(t[static_cast<std::size_t>(r)], "boundary target");
                    for (int a = 0; a < 3; ++a) bs.targets.data()[3 * r + a] = row[static_cast<std::size_t>(a)];
                }
            }
            cfg.boundaries.push_back(std::move(bs));
        }
    } catch (const geom::json::exception& e) {
        throw ConfigError(std::string("sim config: ") + e.what());
    }
    // unit-length floor normal so the height threshold reads in world units
    if (cfg.floor.enabled) {
        const double n = std::sqrt(cfg.floor.normal[0] * cfg.floor.normal[0] +
                                   cfg.floor.normal[1] * cfg.floor.normal[1] +
                                   cfg.floor.normal[2] * cfg.floor.normal[2]);
        if (n > 0.0)
            for (auto& c : cfg.floor.normal) c /= n;
    }
    cfg.validate();
    return cfg;
}

}  // namespace anisim::sim
