#pragma once

// Per-point descriptors for the stiffness network. Each point sees its own
// weight distribution, the spatial gradients of those weights, how the
// weights vary over its neighborhood, a weight-blended summary of the handle
// transforms at a reference frame, and the energy density it carried in the
// previous training epoch. Boundary regions between differently moving parts
// light up in the variance and gradient blocks, which is exactly what the
// material head needs to localize stiffness changes.
//
// Layout, with J handles (width 5J + 8):
//   [0,J)        weights
//   [J,4J)       weight spatial gradients, 3 components per handle
//   [4J,5J)      neighborhood variance of weights
//   [5J,5J+7)    sum_j w_ij * (7-vector of handle j at the reference frame)
//   [5J+7]       previous-epoch energy density
//
// The rest position itself is not a feature column; it feeds the network's
// query path directly.

#include <cstdint>
#include <vector>

#include "anisim/ad/ops.hpp"

namespace anisim::material {

inline std::int64_t feature_width(std::int64_t num_handles) { return 5 * num_handles + 8; }

inline ad::Tensor material_features(const ad::Tensor& w, const ad::Tensor& wgrad,
                                    const ad::Tensor& t_ref, const ad::Tensor& w_prev,
                                    const std::vector<std::int64_t>& idx, std::int64_t k) {
    const std::int64_t n = w.dim(0), j = w.dim(1);
    check_contract(wgrad.ndim() == 3 && wgrad.dim(0) == n && wgrad.dim(1) == j,
                   "material_features: weight gradient shape");
    check_contract(t_ref.ndim() == 2 && t_ref.dim(0) == j && t_ref.dim(1) == 7,
                   "material_features: reference transforms must be [J,7]");
    check_contract(w_prev.ndim() == 2 && w_prev.dim(0) == n && w_prev.dim(1) == 1,
                   "material_features: previous energy density must be [N,1]");
    check_contract(!w_prev.taped(),
                   "material_features: previous energy density is an input, not a graph node");
    ad::Tensor mu = ad::knn_mean(w, idx, k);
    ad::Tensor var = ad::sub(ad::knn_mean(ad::square(w), idx, k), ad::square(mu));
    ad::Tensor summary = ad::matmul(w, t_ref);
    return ad::concat_cols({w, ad::reshape(wgrad, {n, 3 * j}), var, summary, w_prev});
}

}  // namespace anisim::material
