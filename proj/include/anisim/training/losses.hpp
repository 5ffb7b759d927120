#pragma once

// Training losses and negative-pose sampling. Reconstruction compares a
// predicted frame against the observed one: tracked trajectories use the
// per-index squared error, untracked ones a symmetric Chamfer discrepancy
// whose correspondences are recomputed from the current prediction each call
// but held fixed inside the graph, so gradients move points toward their
// matched targets rather than through the match selection itself.

#include <cmath>
#include <cstdint>
#include <vector>

#include "anisim/ad/ops.hpp"
#include "anisim/geometry/chamfer.hpp"
#include "anisim/support/rng.hpp"

namespace anisim::train {

// mean_i |pred_i - target_i|^2 under known row correspondence.
inline ad::Tensor tracked_frame_loss(const ad::Tensor& pred, const ad::Tensor& target) {
    check_contract(pred.same_shape(target), "tracked_frame_loss: shape mismatch");
    check_contract(!target.taped(), "tracked_frame_loss: target is data, not a graph node");
    return ad::scale(ad::sum(ad::square(ad::sub(pred, target))),
                     1.0 / static_cast<double>(pred.dim(0)));
}

// Symmetric Chamfer on squared distances with detached correspondences.
inline ad::Tensor chamfer_frame_loss(const ad::Tensor& pred, const ad::Tensor& target) {
    check_contract(!target.taped(), "chamfer_frame_loss: target is data, not a graph node");
    const std::vector<std::int64_t> fwd = geom::nearest_indices(pred, target);
    const std::vector<std::int64_t> bwd = geom::nearest_indices(target, pred);
    ad::Tensor to_target =
        ad::scale(ad::sum(ad::square(ad::sub(pred, ad::gather_rows(target, fwd)))),
                  1.0 / static_cast<double>(pred.dim(0)));
    ad::Tensor from_target =
        ad::scale(ad::sum(ad::square(ad::sub(ad::gather_rows(pred, bwd), target))),
                  1.0 / static_cast<double>(target.dim(0)));
    return ad::add(to_target, from_target);
}

inline ad::Tensor frame_discrepancy(const ad::Tensor& pred, const ad::Tensor& target,
                                    bool tracked) {
    return tracked ? tracked_frame_loss(pred, target) : chamfer_frame_loss(pred, target);
}

// mean over points and channels of 1/E; the softplus floor upstream keeps the
// reciprocal finite.
inline ad::Tensor stiffness_penalty(const ad::Tensor& e) { return ad::mean(ad::reciprocal(e)); }

// Noise amplitude for negative sampling: alpha = 1 - gamma^(e/T), growing from
// zero as training progresses. The reversed flag runs the same curve backwards
// (start loud, fade out).
inline double noise_scale(std::int64_t epoch, std::int64_t total, double gamma, bool reversed) {
    check_contract(total > 0 && epoch >= 0 && epoch <= total, "noise_scale: bad epoch range");
    check_contract(gamma >= 0.0 && gamma <= 1.0, "noise_scale: gamma outside [0,1]");
    const double frac =
        static_cast<double>(reversed ? total - epoch : epoch) / static_cast<double>(total);
    return 1.0 - std::pow(gamma, frac);
}

// T_neg = T_pos + alpha * eps with eps i.i.d. standard normal. The noise enters
// as a constant, so gradients flow through T_pos alone. Draws happen even when
// alpha is zero, keeping the stream position independent of the schedule.
inline ad::Tensor sample_negative_transforms(const ad::Tensor& t_pos, std::int64_t epoch,
                                             std::int64_t total, double gamma, Rng& rng,
                                             bool reversed = false) {
    const double alpha = noise_scale(epoch, total, gamma, reversed);
    ad::Tensor eps(t_pos.shape());
    for (std::int64_t i = 0; i < eps.numel(); ++i) eps.data()[i] = alpha * rng.normal();
    return ad::add(t_pos, eps);
}

}  // namespace anisim::train
