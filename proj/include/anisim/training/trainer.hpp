#pragma once

// Two-stage trainer. Stage one fits the skinning field and the per-frame
// handle transforms to the observed motion (reconstruction + orthogonality).
// Stage two brings in the energy objective: observed motion should be cheap
// under the learned stiffness field while noise-perturbed motion is expensive,
// with a reciprocal-stiffness regularizer blocking the trivial all-soft
// solution. Weight-field and transform parameters share one optimizer; the
// stiffness network gets its own, stepped only once stage two begins, so the
// two groups' moment estimates never mix.
//
// The no-observation mode has nothing to reconstruct: it samples random handle
// poses each epoch and minimizes their energy plus orthogonality, shaping the
// weights so that arbitrary handle motion stays cheap (rigid grouping).

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "anisim/ad/adam.hpp"
#include "anisim/ad/ops.hpp"
#include "anisim/ad/param_store.hpp"
#include "anisim/deformation/handles.hpp"
#include "anisim/deformation/reduced_map.hpp"
#include "anisim/deformation/weight_field.hpp"
#include "anisim/energy/neohookean.hpp"
#include "anisim/errors.hpp"
#include "anisim/geometry/chamfer.hpp"
#include "anisim/geometry/io.hpp"
#include "anisim/geometry/scene.hpp"
#include "anisim/material/features.hpp"
#include "anisim/material/material_net.hpp"
#include "anisim/support/rng.hpp"
#include "anisim/training/losses.hpp"

namespace anisim::train {

enum class TrainMode { kObserved, kMultiTrajectory, kNoObservation };

inline TrainMode parse_train_mode(const std::string& s) {
    if (s == "observed") return TrainMode::kObserved;
    if (s == "multi_trajectory") return TrainMode::kMultiTrajectory;
    if (s == "no_observation") return TrainMode::kNoObservation;
    throw ConfigError("unknown training mode '" + s + "'");
}

inline std::string train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::kObserved: return "observed";
        case TrainMode::kMultiTrajectory: return "multi_trajectory";
        case TrainMode::kNoObservation: return "no_observation";
    }
    return "?";
}

struct TrainConfig {
    std::int64_t num_handles = 4;
    std::int64_t knn = 20;
    std::int64_t hidden_width = 64;  // both networks
    std::int64_t material_blocks = 2;
    std::int64_t epochs = 2000;
    std::int64_t stage1_epochs = -1;  // negative: 30% of epochs
    double lr = 1e-3;
    double weight_recon = 1e3;
    double weight_ortho = 0.1;
    double weight_energy = 1.0;
    double weight_stiffness = 1e2;
    double gamma = 0.5;  // negative-noise schedule intensity
    bool reverse_noise = false;
    std::int64_t negative_draws = 1;
    double random_pose_scale = 0.3;  // no-observation pose sampling
    double nu = 0.45;
    bool corrected_neohookean = false;
    double energy_floor = 1e-8;  // guard for 1/W_neg
    double clip_norm = 10.0;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::kObserved;

    material::MaterialNetConfig material_config() const {
        material::MaterialNetConfig m;
        m.hidden_width = hidden_width;
        m.num_blocks = material_blocks;
        return m;
    }

    std::int64_t resolved_stage1() const {
        if (mode == TrainMode::kNoObservation) return 0;
        return stage1_epochs >= 0 ? std::min(stage1_epochs, epochs) : epochs * 3 / 10;
    }

    void validate() const {
        if (num_handles < 1) throw ConfigError("num_handles must be >= 1");
        if (knn < 4) throw ConfigError("knn must be >= 4 for the gradient fit");
        if (hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
        if (material_blocks < 0) throw ConfigError("material_blocks must be >= 0");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (stage1_epochs > epochs)
            throw ConfigError("stage1_epochs exceeds the total epoch count");
        if (lr <= 0.0) throw ConfigError("lr must be positive");
        if (weight_recon < 0.0 || weight_ortho < 0.0 || weight_energy < 0.0 ||
            weight_stiffness < 0.0)
            throw ConfigError("loss weights must be nonnegative");
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0,1]");
        if (gamma == 1.0 && mode != TrainMode::kNoObservation)
            throw ConfigError("gamma = 1 makes every negative equal its positive");
        if (negative_draws < 1) throw ConfigError("negative_draws must be >= 1");
        if (nu < 0.0 || nu >= 0.5) throw ConfigError("nu must lie in [0, 0.5)");
        if (energy_floor <= 0.0) throw ConfigError("energy_floor must be positive");
        if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
    }
};

// Strict JSON view of TrainConfig: unknown keys are schema violations and
// every complaint names the offending field.
inline TrainConfig parse_train_config(const geom::json& j) {
    if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "num_handles") cfg.num_handles = value.get<std::int64_t>();
            else if (key == "knn") cfg.knn = value.get<std::int64_t>();
            else if (key == "hidden_width") cfg.hidden_width = value.get<std::int64_t>();
            else if (key == "material_blocks") cfg.material_blocks = value.get<std::int64_t>();
            else if (key == "epochs") cfg.epochs = value.get<std::int64_t>();
            else if (key == "stage1_epochs") cfg.stage1_epochs = value.get<std::int64_t>();
            else if (key == "lr") cfg.lr = value.get<double>();
            else if (key == "weight_recon") cfg.weight_recon = value.get<double>();
            else if (key == "weight_ortho") cfg.weight_ortho = value.get<double>();
            else if (key == "weight_energy") cfg.weight_energy = value.get<double>();
            else if (key == "weight_stiffness") cfg.weight_stiffness = value.get<double>();
            else if (key == "gamma") cfg.gamma = value.get<double>();
            else if (key == "reverse_noise") cfg.reverse_noise = value.get<bool>();
            else if (key == "negative_draws") cfg.negative_draws = value.get<std::int64_t>();
            else if (key == "random_pose_scale") cfg.random_pose_scale = value.get<double>();
            else if (key == "nu") cfg.nu = value.get<double>();
            else if (key == "corrected_neohookean")
                cfg.corrected_neohookean = value.get<bool>();
            else if (key == "energy_floor") cfg.energy_floor = value.get<double>();
            else if (key == "clip_norm") cfg.clip_norm = value.get<double>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "mode") cfg.mode = parse_train_mode(value.get<std::string>());
            else throw ConfigError("train config: unknown field \"" + key + "\"");
        } catch (const geom::json::exception&) {
            throw ConfigError("train config: field \"" + key + "\" has the wrong type");
        }
    }
    cfg.validate();
    return cfg;
}

// All scalars of one epoch's objective, still on the tape. density_mean is a
// value-only byproduct (mean positive energy density per point) that seeds the
// next epoch's W_prev feature.
struct EpochTerms {
    ad::Tensor recon, ortho, w_pos, w_neg_inv, reg;
    ad::Tensor total;
    double noise_alpha = 0.0;
    bool negative_clamped = false;
    std::vector<double> density_mean;
};

// Builds the full objective for one epoch from watched parameters. `energize`
// selects stage: false gives the stage-one recon+ortho objective, true the
// complete contrastive one (and is required in no-observation mode, which has
// no stage one). The rng advances by exactly the same number of draws
// regardless of parameter values, so finite-difference probes can replay an
// epoch by copying the rng. `term` tracks the piece under construction and
// survives a numeric abort, naming the offender.
inline EpochTerms epoch_loss(const TrainConfig& cfg, const geom::SceneData& scene,
                             const deform::ReducedKinematics& kin, const ad::Tensor& volumes,
                             const std::map<std::string, ad::Tensor>& p,
                             const ad::Tensor& w_prev, std::int64_t epoch, bool energize,
                             Rng& rng, const char*& term) {
    const std::int64_t n = scene.num_points();
    const std::int64_t j = cfg.num_handles;
    const bool observes = cfg.mode != TrainMode::kNoObservation;
    const auto used_traj = observes ? static_cast<std::int64_t>(scene.trajectories.size()) : 0;
    const std::int64_t frames = observes ? scene.num_frames() : 0;
    const material::MaterialNetConfig mat_cfg = cfg.material_config();
    check_contract(observes || energize, "epoch_loss: no-observation mode has no stage one");

    EpochTerms out;

    term = "weight field";
    ad::Tensor w = deform::weight_field(p, kin.rest);
    term = "orthogonality loss";
    out.ortho = deform::orthogonality_loss(w);

    ad::Tensor wgrad, stiff;
    std::int64_t density_frames = 0;
    auto add_density = [&](const ad::Tensor& dens) {
        if (out.density_mean.empty()) out.density_mean.assign(static_cast<std::size_t>(n), 0.0);
        const double* dv = dens.data();
        for (std::int64_t i = 0; i < n; ++i) out.density_mean[static_cast<std::size_t>(i)] += dv[i];
        ++density_frames;
    };

    if (energize) {
        term = "weight gradients";
        wgrad = deform::weight_gradients(w, kin);
        term = "material features";
        ad::Tensor t_ref;
        if (observes) {
            t_ref = ad::reshape(
                ad::slice_rows(p.at(deform::trajectory_key(0)), frames - 1, frames), {j, 7});
        } else {
            t_ref = ad::Tensor({j, 7});
            for (std::int64_t h = 0; h < j; ++h) t_ref.data()[7 * h] = 1.0;
        }
        ad::Tensor feats = material::material_features(w, wgrad, t_ref, w_prev, kin.nbr, kin.k);
        term = "stiffness network";
        stiff = material::material_net(p, kin.rest, feats, kin.nbr, kin.k, mat_cfg);
        term = "stiffness regularizer";
        out.reg = stiffness_penalty(stiff);
    }

    if (observes) {
        for (std::int64_t o = 0; o < used_traj; ++o) {
            const ad::Tensor& t_par = p.at(deform::trajectory_key(o));
            for (std::int64_t f = 0; f < frames; ++f) {
                term = "reconstruction loss";
                auto [rot, trans] = deform::frame_transforms(t_par, f);
                ad::Tensor pred = deform::map_positions(w, rot, trans, kin);
                ad::Tensor d = frame_discrepancy(
                    pred,
                    scene.trajectories[static_cast<std::size_t>(o)][static_cast<std::size_t>(f)],
                    scene.tracked);
                out.recon = out.recon.defined() ? ad::add(out.recon, d) : d;
                if (energize) {
                    term = "positive energy";
                    ad::Tensor fg = deform::map_deformation(w, wgrad, rot, trans, kin);
                    ad::Tensor dens =
                        energy::energy_density(fg, stiff, cfg.nu, cfg.corrected_neohookean);
                    add_density(dens);
                    ad::Tensor tot = energy::total_energy(dens, volumes);
                    out.w_pos = out.w_pos.defined() ? ad::add(out.w_pos, tot) : tot;
                }
            }
        }
        if (energize) {
            out.w_pos = ad::scale(out.w_pos, 1.0 / static_cast<double>(used_traj * frames));
            term = "negative energy";
            out.noise_alpha = noise_scale(epoch, cfg.epochs, cfg.gamma, cfg.reverse_noise);
            for (std::int64_t d = 0; d < cfg.negative_draws; ++d) {
                ad::Tensor acc;
                for (std::int64_t o = 0; o < used_traj; ++o) {
                    ad::Tensor t_neg =
                        sample_negative_transforms(p.at(deform::trajectory_key(o)), epoch,
                                                   cfg.epochs, cfg.gamma, rng, cfg.reverse_noise);
                    for (std::int64_t f = 0; f < frames; ++f) {
                        auto [rot, trans] = deform::frame_transforms(t_neg, f);
                        ad::Tensor fg = deform::map_deformation(w, wgrad, rot, trans, kin);
                        ad::Tensor tot = energy::total_energy(
                            energy::energy_density(fg, stiff, cfg.nu, cfg.corrected_neohookean),
                            volumes);
                        acc = acc.defined() ? ad::add(acc, tot) : tot;
                    }
                }
                ad::Tensor w_neg = ad::scale(acc, 1.0 / static_cast<double>(used_traj * frames));
                if (w_neg.value() < cfg.energy_floor) out.negative_clamped = true;
                ad::Tensor inv = ad::guarded_reciprocal(w_neg, cfg.energy_floor);
                out.w_neg_inv = out.w_neg_inv.defined() ? ad::add(out.w_neg_inv, inv) : inv;
            }
            out.w_neg_inv =
                ad::scale(out.w_neg_inv, 1.0 / static_cast<double>(cfg.negative_draws));
        }
    } else {
        term = "sampled-pose energy";
        for (std::int64_t d = 0; d < cfg.negative_draws; ++d) {
            ad::Tensor t_rand({1, j, 7});
            for (std::int64_t h = 0; h < j; ++h) {
                double* row = t_rand.data() + 7 * h;
                row[0] = 1.0;
                for (int c = 0; c < 7; ++c) row[c] += cfg.random_pose_scale * rng.normal();
            }
            auto [rot, trans] = deform::frame_transforms(t_rand, 0);
            ad::Tensor fg = deform::map_deformation(w, wgrad, rot, trans, kin);
            ad::Tensor dens = energy::energy_density(fg, stiff, cfg.nu, cfg.corrected_neohookean);
            add_density(dens);
            ad::Tensor tot = energy::total_energy(dens, volumes);
            out.w_pos = out.w_pos.defined() ? ad::add(out.w_pos, tot) : tot;
        }
        out.w_pos = ad::scale(out.w_pos, 1.0 / static_cast<double>(cfg.negative_draws));
    }

    if (density_frames > 0) {
        const double inv = 1.0 / static_cast<double>(density_frames);
        for (double& v : out.density_mean) v *= inv;
    }

    term = "total loss";
    out.total = ad::scale(out.ortho, cfg.weight_ortho);
    if (out.recon.defined())
        out.total = ad::add(out.total, ad::scale(out.recon, cfg.weight_recon));
    if (energize) {
        ad::Tensor energy_term =
            out.w_neg_inv.defined() ? ad::add(out.w_pos, out.w_neg_inv) : out.w_pos;
        out.total = ad::add(out.total, ad::scale(energy_term, cfg.weight_energy));
        out.total = ad::add(out.total, ad::scale(out.reg, cfg.weight_stiffness));
    }
    return out;
}

struct EpochStats {
    std::int64_t epoch = 0;
    int stage = 1;
    double recon = 0.0;
    double ortho = 0.0;
    double w_pos = 0.0;
    double w_neg_inv = 0.0;
    double stiffness_reg = 0.0;
    double total = 0.0;
    double noise_alpha = 0.0;
    double grad_norm = 0.0;
    bool negative_clamped = false;
};

struct TrainResult {
    ad::ParamStore params;
    std::vector<EpochStats> history;
    std::vector<double> final_chamfer;  // per trajectory, mean over frames
    ad::Tensor weights;                 // [N,J] trained skinning weights
    ad::Tensor stiffness;               // [N,4] trained stiffness field
    ad::Tensor w_prev;                  // [N,1] last positive energy density
    std::int64_t stage1_epochs = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Parameter store with networks initialized and one transform tensor per
// trajectory, drawn in the order the trainer relies on for reproducibility.
inline ad::ParamStore init_train_params(const TrainConfig& cfg, std::int64_t frames,
                                        std::int64_t num_traj, Rng& rng) {
    ad::ParamStore params;
    deform::WeightFieldConfig wcfg;
    wcfg.num_handles = cfg.num_handles;
    wcfg.hidden_width = cfg.hidden_width;
    deform::init_weight_field(params, wcfg, rng);
    material::init_material_net(params, cfg.material_config(),
                                material::feature_width(cfg.num_handles), rng);
    for (std::int64_t o = 0; o < num_traj; ++o)
        deform::init_handle_transforms(params, deform::trajectory_key(o), frames,
                                       cfg.num_handles);
    return params;
}

inline bool in_motion_group(const std::string& name) {
    return name.rfind("w_net.", 0) == 0 || (!name.empty() && name[0] == 'T');
}

inline TrainResult train(const TrainConfig& cfg, const geom::SceneData& scene,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
    cfg.validate();
    const std::int64_t n = scene.num_points();
    check_contract(n > cfg.knn, "train: need more points than neighbors");
    const bool observes = cfg.mode != TrainMode::kNoObservation;
    const auto num_traj = static_cast<std::int64_t>(scene.trajectories.size());
    if (observes) {
        check_contract(num_traj > 0 && scene.num_frames() > 0,
                       "train: observation modes need at least one trajectory");
        if (cfg.mode == TrainMode::kObserved && num_traj != 1)
            throw ConfigError("observed mode expects one trajectory; use multi_trajectory");
    }
    const std::int64_t frames = observes ? scene.num_frames() : 0;
    const std::int64_t used_traj = observes ? num_traj : 0;

    deform::ReducedKinematics kin = deform::build_kinematics(scene.rest, cfg.knn);
    ad::Tensor volumes = ad::Tensor::full({n}, scene.total_volume / static_cast<double>(n));

    Rng rng(cfg.seed);
    Rng noise_rng = rng.fork(1);  // pose noise independent of init draws
    ad::ParamStore params = init_train_params(cfg, frames, used_traj, rng);

    ad::Adam opt_motion(cfg.lr);
    ad::Adam opt_material(cfg.lr);

    const std::int64_t stage1 = cfg.resolved_stage1();
    ad::Tensor w_prev = ad::Tensor::zeros({n, 1});

    TrainResult result;
    result.stage1_epochs = stage1;

    for (std::int64_t e = 0; e < cfg.epochs; ++e) {
        const bool energize = e >= stage1;
        EpochStats stats;
        stats.epoch = e;
        stats.stage = energize ? 2 : 1;
        EpochTerms terms;
        const char* term = "setup";
        try {
            ad::Tape tape;
            auto p = params.watch_all(tape);
            terms = epoch_loss(cfg, scene, kin, volumes, p, w_prev, e, energize, noise_rng,
                               term);

            term = "backward";
            ad::GradientMap gm = tape.backward(terms.total);
            std::map<std::string, ad::Tensor> grads;
            for (const auto& [name, leaf] : p) {
                if (!energize && !in_motion_group(name)) continue;
                grads.emplace(name, gm.grad(leaf));
            }
            stats.grad_norm = ad::clip_global_norm(grads, cfg.clip_norm);
            std::map<std::string, ad::Tensor> motion_grads, material_grads;
            for (auto& [name, g] : grads)
                (in_motion_group(name) ? motion_grads : material_grads)
                    .emplace(name, std::move(g));
            if (!motion_grads.empty()) opt_motion.step(params, motion_grads);
            if (!material_grads.empty()) opt_material.step(params, material_grads);
        } catch (const NumericFailure& nf) {
            // parameters were last stepped at the end of the previous epoch,
            // so the store still holds the last good state
            result.aborted = true;
            result.abort_reason =
                "epoch " + std::to_string(e) + ", " + term + ": " + nf.what();
            break;
        }

        stats.recon = terms.recon.defined() ? terms.recon.value() : 0.0;
        stats.ortho = terms.ortho.value();
        stats.w_pos = terms.w_pos.defined() ? terms.w_pos.value() : 0.0;
        stats.w_neg_inv = terms.w_neg_inv.defined() ? terms.w_neg_inv.value() : 0.0;
        stats.stiffness_reg = terms.reg.defined() ? terms.reg.value() : 0.0;
        stats.noise_alpha = terms.noise_alpha;
        stats.negative_clamped = terms.negative_clamped;
        stats.total = cfg.weight_recon * stats.recon + cfg.weight_ortho * stats.ortho +
                      cfg.weight_energy * (stats.w_pos + stats.w_neg_inv) +
                      cfg.weight_stiffness * stats.stiffness_reg;

        if (!terms.density_mean.empty()) {
            ad::Tensor next({n, 1});
            for (std::int64_t i = 0; i < n; ++i)
                next.data()[i] = terms.density_mean[static_cast<std::size_t>(i)];
            w_prev = std::move(next);
        }
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }

    // final evaluation with the trained parameters (constant pass, no tape)
    const auto& p = params.all();
    ad::Tensor w = deform::weight_field(p, kin.rest);
    ad::Tensor wgrad = deform::weight_gradients(w, kin);
    ad::Tensor t_ref({cfg.num_handles, 7});
    if (observes) {
        t_ref = ad::reshape(
            ad::slice_rows(params.get(deform::trajectory_key(0)), frames - 1, frames),
            {cfg.num_handles, 7});
    } else {
        for (std::int64_t h = 0; h < cfg.num_handles; ++h) t_ref.data()[7 * h] = 1.0;
    }
    ad::Tensor feats = material::material_features(w, wgrad, t_ref, w_prev, kin.nbr, kin.k);
    result.stiffness =
        material::material_net(p, kin.rest, feats, kin.nbr, kin.k, cfg.material_config());
    result.weights = std::move(w);
    result.w_prev = std::move(w_prev);
    for (std::int64_t o = 0; o < used_traj; ++o) {
        const ad::Tensor& t_par = params.get(deform::trajectory_key(o));
        double acc = 0.0;
        for (std::int64_t f = 0; f < frames; ++f) {
            auto [rot, trans] = deform::frame_transforms(t_par, f);
            ad::Tensor pred = deform::map_positions(result.weights, rot, trans, kin);
            acc += geom::chamfer_sq(
                pred,
                scene.trajectories[static_cast<std::size_t>(o)][static_cast<std::size_t>(f)]);
        }
        result.final_chamfer.push_back(acc / static_cast<double>(frames));
    }
    result.params = std::move(params);
    return result;
}

// Checkpoint with the trained parameters plus the derived per-point fields a
// consumer needs without rerunning the networks.
inline void save_training_checkpoint(const std::string& path, const TrainConfig& cfg,
                                     const TrainResult& result) {
    ad::ParamStore full;
    for (const auto& [name, value] : result.params.all()) full.add(name, value);
    full.add("E", result.stiffness);
    full.add("W_prev", result.w_prev);
    const material::MaterialNetConfig mat_cfg = cfg.material_config();
    geom::json metadata = {
        {"J", cfg.num_handles},
        {"K", cfg.knn},
        {"hidden_width", cfg.hidden_width},
        {"seed", cfg.seed},
        {"stage", result.history.empty() ? 0 : result.history.back().stage},
        {"nu", cfg.nu},
        {"e_min", mat_cfg.e_min},
        {"e_scale", mat_cfg.e_scale},
        {"corrected_neohookean", cfg.corrected_neohookean},
        {"num_blocks", cfg.material_blocks},
        {"mode", train_mode_name(cfg.mode)},
        {"epochs", cfg.epochs},
        {"stage1_epochs", result.stage1_epochs},
        {"aborted", result.aborted},
    };
    geom::save_checkpoint(path, full, metadata);
}

}  // namespace anisim::train
