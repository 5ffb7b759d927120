// Command-line surface for the pipeline: synthetic scene generation, system
// identification, forward simulation, trajectory comparison, and golden-file
// regeneration. One subcommand per run; every non-dry run leaves a
// run_manifest.json recording command, config hash, seed, inputs, and
// artifacts, so results stay traceable.
//
// Exit codes: 0 success, 2 configuration error, 3 data or checkpoint error,
// 4 numeric failure. The GDG_SEED environment variable overrides the seed of
// any command that draws randomness.

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "anisim/errors.hpp"
#include "anisim/geometry/chamfer.hpp"
#include "anisim/geometry/io.hpp"
#include "anisim/geometry/scene.hpp"
#include "anisim/simulation/sim_config.hpp"
#include "anisim/simulation/simulator.hpp"
#include "anisim/training/trainer.hpp"

namespace fs = std::filesystem;
namespace geom = anisim::geom;
namespace train = anisim::train;
namespace sim = anisim::sim;
using anisim::geom::json;

namespace {

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// nlohmann objects keep keys sorted, so dump() is canonical under reordering
std::string config_hash(const json& config) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(config.dump())));
    return buf;
}

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("GDG_SEED");
    if (!raw || !*raw) return std::nullopt;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0')
        throw anisim::ConfigError("GDG_SEED must be an unsigned integer");
    return static_cast<std::uint64_t>(v);
}

json read_json_file(const std::string& path, const char* what) {
    std::ifstream f(path);
    if (!f) throw anisim::ParseError(std::string("cannot open ") + what + ": " + path);
    try {
        json j;
        f >> j;
        return j;
    } catch (const json::exception& e) {
        throw anisim::ConfigError(std::string(what) + " " + path + ": " + e.what());
    }
}

// One per run; assembled as the command executes and written (or printed,
// for dry runs and out-less eval) at the end.
struct RunRecord {
    std::string command;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::string out_dir;
    std::vector<std::string> artifacts;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    json manifest() const {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return json{{"command", command},      {"config_hash", config_hash(config)},
                    {"seed", seed},            {"inputs", inputs},
                    {"out_dir", out_dir},      {"wall_clock_seconds", secs},
                    {"artifacts", artifacts}};
    }

    void write(bool dry_run) const {
        if (dry_run || out_dir.empty()) {
            std::cout << json{{"dry_run", dry_run}, {"manifest", manifest()}}.dump(2) << "\n";
            return;
        }
        std::ofstream f(out_dir + "/run_manifest.json");
        f << manifest().dump(2) << "\n";
        if (!f) throw anisim::ParseError("write failed: " + out_dir + "/run_manifest.json");
    }
};

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string kind = "two_cube_hinge";
    std::int64_t points = 1000;
    std::int64_t frames = 30;
    std::int64_t trajectories = 1;
    double dt = 1.0 / 30.0;
    std::uint64_t seed = 0;
    std::string out;
    bool dry_run = false;
};

int cmd_gen_data(const GenDataArgs& args) {
    geom::SceneSpec spec;
    spec.name = args.kind;
    spec.num_points = args.points;
    spec.num_frames = args.frames;
    spec.num_trajectories = args.trajectories;
    spec.dt = args.dt;
    spec.seed = env_seed().value_or(args.seed);

    RunRecord rec;
    rec.command = "gen-data";
    rec.seed = spec.seed;
    rec.out_dir = args.out;
    rec.config = {{"kind", spec.name},   {"points", spec.num_points},
                  {"frames", spec.num_frames}, {"trajectories", spec.num_trajectories},
                  {"dt", spec.dt},       {"seed", spec.seed}};

    geom::SceneData scene = geom::generate_scene(spec);
    if (!args.dry_run) {
        geom::save_scene(args.out, scene);
        rec.artifacts.push_back("scene.json");
        rec.artifacts.push_back("rest.csv");
        const json manifest = read_json_file(args.out + "/scene.json", "scene manifest");
        for (const auto& entry : manifest.at("frame_files")) {
            if (entry.is_array())
                for (const auto& name : entry) rec.artifacts.push_back(name.get<std::string>());
            else
                rec.artifacts.push_back(entry.get<std::string>());
        }
    }
    rec.write(args.dry_run);
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

json dump_train_config(const train::TrainConfig& cfg) {
    return json{{"num_handles", cfg.num_handles},
                {"knn", cfg.knn},
                {"hidden_width", cfg.hidden_width},
                {"material_blocks", cfg.material_blocks},
                {"epochs", cfg.epochs},
                {"stage1_epochs", cfg.stage1_epochs},
                {"lr", cfg.lr},
                {"weight_recon", cfg.weight_recon},
                {"weight_ortho", cfg.weight_ortho},
                {"weight_energy", cfg.weight_energy},
                {"weight_stiffness", cfg.weight_stiffness},
                {"gamma", cfg.gamma},
                {"reverse_noise", cfg.reverse_noise},
                {"negative_draws", cfg.negative_draws},
                {"random_pose_scale", cfg.random_pose_scale},
                {"nu", cfg.nu},
                {"corrected_neohookean", cfg.corrected_neohookean},
                {"energy_floor", cfg.energy_floor},
                {"clip_norm", cfg.clip_norm},
                {"seed", cfg.seed},
                {"mode", train::train_mode_name(cfg.mode)}};
}

json epoch_record(const train::EpochStats& s) {
    return json{{"epoch", s.epoch},
                {"stage", s.stage},
                {"recon", s.recon},
                {"ortho", s.ortho},
                {"w_pos", s.w_pos},
                {"w_neg_inv", s.w_neg_inv},
                {"stiffness_reg", s.stiffness_reg},
                {"total", s.total},
                {"noise_alpha", s.noise_alpha},
                {"grad_norm", s.grad_norm},
                {"negative_clamped", s.negative_clamped}};
}

struct TrainArgs {
    std::string scene;
    std::string config;
    std::string out;
    bool dry_run = false;
};

int cmd_train(const TrainArgs& args) {
    geom::SceneData scene = geom::load_scene(args.scene);
    train::TrainConfig cfg = args.config.empty()
                                 ? train::TrainConfig{}
                                 : train::parse_train_config(read_json_file(args.config,
                                                                            "train config"));
    if (auto s = env_seed()) cfg.seed = *s;
    cfg.validate();

    RunRecord rec;
    rec.command = "train";
    rec.seed = cfg.seed;
    rec.inputs.push_back(args.scene);
    if (!args.config.empty()) rec.inputs.push_back(args.config);
    rec.out_dir = args.out;
    rec.config = dump_train_config(cfg);

    if (args.dry_run) {
        rec.write(true);
        return 0;
    }

    fs::create_directories(args.out);
    const std::string metrics_path = args.out + "/metrics.jsonl";
    fs::remove(metrics_path);  // reruns replace, never append across runs
    train::TrainResult result = train::train(cfg, scene, [&](const train::EpochStats& s) {
        geom::append_jsonl(metrics_path, epoch_record(s));
    });

    train::save_training_checkpoint(args.out + "/checkpoint.json", cfg, result);
    geom::write_csv_stiffness(args.out + "/stiffness.csv", result.stiffness);

    json report = {{"epochs_run", result.history.size()},
                   {"stage1_epochs", result.stage1_epochs},
                   {"final_chamfer", result.final_chamfer},
                   {"aborted", result.aborted},
                   {"abort_reason", result.abort_reason},
                   {"mode", train::train_mode_name(cfg.mode)}};
    if (!result.history.empty()) report["final"] = epoch_record(result.history.back());
    {
        std::ofstream f(args.out + "/report.json");
        f << report.dump(2) << "\n";
        if (!f) throw anisim::ParseError("write failed: " + args.out + "/report.json");
    }
    rec.artifacts = {"checkpoint.json", "metrics.jsonl", "report.json", "stiffness.csv"};
    rec.write(false);

    if (result.aborted) {
        std::cerr << "training aborted: " << result.abort_reason << "\n";
        return 4;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string checkpoint;
    std::string scene;
    std::string sim_config;
    std::string out;
    bool dry_run = false;
};

json breakdown_record(const sim::IpBreakdown& e) {
    return json{{"inertia", e.inertia},   {"elastic", e.elastic}, {"gravity", e.gravity},
                {"external", e.external}, {"boundary", e.boundary}, {"floor", e.floor}};
}

int cmd_simulate(const SimulateArgs& args) {
    auto [params, meta] = geom::load_checkpoint(args.checkpoint);
    geom::SceneData scene = geom::load_scene(args.scene);
    const json cfg_json = read_json_file(args.sim_config, "sim config");
    sim::SimConfig cfg = sim::parse_sim_config(cfg_json, scene.rest);
    if (!cfg_json.contains("density")) cfg.density = scene.density;

    RunRecord rec;
    rec.command = "simulate";
    rec.inputs = {args.checkpoint, args.scene, args.sim_config};
    rec.out_dir = args.out;
    rec.config = cfg_json;

    sim::FrozenFields fields =
        sim::freeze_from_checkpoint(params, meta, scene.rest, scene.total_volume);
    if (args.dry_run) {
        rec.write(true);
        return 0;
    }

    sim::SimResult result = sim::simulate(fields, cfg);

    geom::SceneData out_scene;
    out_scene.name = "simulated";
    out_scene.dt = cfg.dt;
    out_scene.tracked = true;
    out_scene.total_volume = scene.total_volume;
    out_scene.density = cfg.density;
    out_scene.rest = fields.rest;
    out_scene.trajectories.push_back(result.trajectory);
    geom::save_scene(args.out, out_scene);

    const std::string diag_path = args.out + "/diagnostics.jsonl";
    fs::remove(diag_path);
    for (const auto& d : result.diagnostics)
        geom::append_jsonl(diag_path, json{{"frame", d.frame},
                                           {"iters", d.iters},
                                           {"residual", d.residual},
                                           {"stalled", d.stalled},
                                           {"kinetic", d.kinetic},
                                           {"energy", breakdown_record(d.energy)}});
    if (result.aborted)
        geom::append_jsonl(diag_path, json{{"aborted", true}, {"error", result.abort_reason}});

    rec.artifacts = {"scene.json", "rest.csv", "diagnostics.jsonl"};
    for (std::size_t t = 0; t < result.trajectory.size(); ++t) {
        char name[64];
        std::snprintf(name, sizeof(name), "frame_%04zu.csv", t);
        rec.artifacts.push_back(name);
    }
    rec.write(false);

    if (result.aborted) {
        std::cerr << "simulation aborted: " << result.abort_reason << "\n";
        return 4;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string ref;
    std::string metric = "chamfer";
    std::string out;
};

int cmd_eval(const EvalArgs& args) {
    geom::SceneData pred = geom::load_scene(args.pred);
    geom::SceneData ref = geom::load_scene(args.ref);
    if (pred.trajectories.empty() || ref.trajectories.empty())
        throw anisim::ParseError("eval: both inputs need at least one trajectory");
    const auto& pf = pred.trajectories[0];
    const auto& rf = ref.trajectories[0];
    if (pf.size() != rf.size())
        throw anisim::ParseError("eval: frame counts differ (" + std::to_string(pf.size()) +
                                 " vs " + std::to_string(rf.size()) + ")");

    std::vector<double> per_frame;
    double mean = 0.0;
    for (std::size_t t = 0; t < pf.size(); ++t) {
        const double d = args.metric == "chamfer" ? geom::chamfer_sq(pf[t], rf[t])
                                                  : geom::l2_sq(pf[t], rf[t]);
        per_frame.push_back(d);
        mean += d;
    }
    if (!per_frame.empty()) mean /= static_cast<double>(per_frame.size());

    RunRecord rec;
    rec.command = "eval";
    rec.inputs = {args.pred, args.ref};
    rec.out_dir = args.out;
    rec.config = {{"pred", args.pred}, {"ref", args.ref}, {"metric", args.metric}};

    json metrics = {{"metric", args.metric},
                    {"frames", per_frame.size()},
                    {"per_frame", per_frame},
                    {"mean", mean}};
    if (!args.out.empty()) {
        fs::create_directories(args.out);
        std::ofstream f(args.out + "/metrics.json");
        f << metrics.dump(2) << "\n";
        if (!f) throw anisim::ParseError("write failed: " + args.out + "/metrics.json");
        rec.artifacts.push_back("metrics.json");
        rec.write(false);
    }
    metrics["manifest"] = rec.manifest();
    std::cout << metrics.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// oracle: regenerate the closed-form energy goldens. The density here is
// written out longhand, independent of the library's implementation, so a
// regression in one cannot silently rewrite the other.
// ---------------------------------------------------------------------------

struct OracleProbe {
    std::array<double, 9> f;
    double mu, lambda;
    std::array<double, 3> alpha;
    bool corrected;
};

double oracle_psi(const OracleProbe& p) {
    double c_diag[3];  // diagonal of F^T F: squared column norms
    for (int k = 0; k < 3; ++k)
        c_diag[k] = p.f[k] * p.f[k] + p.f[3 + k] * p.f[3 + k] + p.f[6 + k] * p.f[6 + k];
    const double tr_c = c_diag[0] + c_diag[1] + c_diag[2];
    const double det = p.f[0] * (p.f[4] * p.f[8] - p.f[5] * p.f[7]) -
                       p.f[1] * (p.f[3] * p.f[8] - p.f[5] * p.f[6]) +
                       p.f[2] * (p.f[3] * p.f[7] - p.f[4] * p.f[6]);
    double psi = 0.5 * p.mu * (tr_c - 3.0) + 0.5 * p.lambda * (det - 1.0) * (det - 1.0);
    for (int k = 0; k < 3; ++k)
        psi += 0.5 * p.alpha[k] * (c_diag[k] - 1.0) * (c_diag[k] - 1.0);
    if (p.corrected) psi -= p.mu * std::log(det);
    return psi;
}

struct OracleArgs {
    std::string out;
    bool dry_run = false;
};

int cmd_oracle(const OracleArgs& args) {
    // probes cover each term in isolation, combinations, and the corrected
    // variant; identity rows pin the zero
    const std::vector<OracleProbe> probes = {
        {{2, 0, 0, 0, 1, 0, 0, 0, 1}, 1, 1, {0, 0, 0}, false},
        {{2, 0, 0, 0, 1, 0, 0, 0, 1}, 0, 0, {1, 0, 0}, false},
        {{1, 0, 0, 0, 1, 0, 0, 0, 1}, 3.7, 1.2, {0.5, 0.6, 0.7}, false},
        {{2, 0, 0, 0, 2, 0, 0, 0, 2}, 1, 2, {0.5, 0.5, 0.5}, false},
        {{2, 0, 0, 0, 2, 0, 0, 0, 2}, 1, 2, {0.5, 0.5, 0.5}, true},
        {{1, 0.5, 0, 0, 1, 0, 0, 0, 1}, 1, 1, {0, 1, 0}, false},
        {{2, 0, 0, 0, 1, 0, 0, 0, 1}, 1, 1, {1, 0, 0}, false},
    };

    RunRecord rec;
    rec.command = "oracle";
    rec.out_dir = args.out;
    rec.config = {{"rows", probes.size()}};

    if (!args.dry_run) {
        fs::create_directories(args.out);
        const std::string path = args.out + "/energy_golden.csv";
        std::ofstream f(path);
        f << "f00,f01,f02,f10,f11,f12,f20,f21,f22,mu,lambda,a0,a1,a2,corrected,psi\n";
        auto emit = [&](double v) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            f << buf;
        };
        for (const auto& p : probes) {
            for (double v : p.f) {
                emit(v);
                f << ",";
            }
            emit(p.mu);
            f << ",";
            emit(p.lambda);
            f << ",";
            for (double a : p.alpha) {
                emit(a);
                f << ",";
            }
            f << (p.corrected ? 1 : 0) << ",";
            emit(oracle_psi(p));
            f << "\n";
        }
        if (!f) throw anisim::ParseError("write failed: " + path);
        rec.artifacts.push_back("energy_golden.csv");
    }
    rec.write(args.dry_run);
    return 0;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const anisim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const anisim::ContractViolation& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const anisim::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const anisim::NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anisim: identify and simulate unified elastic systems"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic scene");
    gen_cmd->add_option("--kind", gen.kind, "scene kind")
        ->check(CLI::IsMember({"two_cube_hinge", "two_cube_split", "rope_fixed_end",
                               "multibody_drop", "soft_none"}));
    gen_cmd->add_option("--points", gen.points, "number of sample points");
    gen_cmd->add_option("--frames", gen.frames, "number of observed frames");
    gen_cmd->add_option("--trajectories", gen.trajectories, "number of observed motions");
    gen_cmd->add_option("--dt", gen.dt, "frame duration in seconds");
    gen_cmd->add_option("--seed", gen.seed, "generator seed");
    gen_cmd->add_option("--out", gen.out, "output scene directory")->required();
    gen_cmd->add_flag("--dry-run", gen.dry_run, "validate inputs, write nothing");

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "identify a system from a scene");
    train_cmd->add_option("--scene", tr.scene, "scene directory")->required();
    train_cmd->add_option("--config", tr.config, "training config JSON");
    train_cmd->add_option("--out", tr.out, "output run directory")->required();
    train_cmd->add_flag("--dry-run", tr.dry_run, "validate inputs, write nothing");

    SimulateArgs si;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run dynamics from a checkpoint");
    sim_cmd->add_option("--checkpoint", si.checkpoint, "trained checkpoint file")->required();
    sim_cmd->add_option("--scene", si.scene, "scene directory with rest geometry")->required();
    sim_cmd->add_option("--sim-config", si.sim_config, "simulation config JSON")->required();
    sim_cmd->add_option("--out", si.out, "output trajectory directory")->required();
    sim_cmd->add_flag("--dry-run", si.dry_run, "validate inputs, write nothing");

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "compare two trajectories");
    eval_cmd->add_option("--pred", ev.pred, "predicted trajectory directory")->required();
    eval_cmd->add_option("--ref", ev.ref, "reference trajectory directory")->required();
    eval_cmd->add_option("--metric", ev.metric, "distance metric")
        ->check(CLI::IsMember({"chamfer", "l2"}));
    eval_cmd->add_option("--out", ev.out, "optional output directory");

    OracleArgs orc;
    CLI::App* oracle_cmd =
        app.add_subcommand("oracle", "regenerate closed-form energy golden files");
    oracle_cmd->add_option("--out", orc.out, "output directory")->required();
    oracle_cmd->add_flag("--dry-run", orc.dry_run, "validate inputs, write nothing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (gen_cmd->parsed()) return guarded([&] { return cmd_gen_data(gen); });
    if (train_cmd->parsed()) return guarded([&] { return cmd_train(tr); });
    if (sim_cmd->parsed()) return guarded([&] { return cmd_simulate(si); });
    if (eval_cmd->parsed()) return guarded([&] { return cmd_eval(ev); });
    if (oracle_cmd->parsed()) return guarded([&] { return cmd_oracle(orc); });
    return 2;
}
