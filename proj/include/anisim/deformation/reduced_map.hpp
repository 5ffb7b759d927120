#pragma once

// The reduced deformation map. A point moves as the weight-blended action of
// the handle transforms,
//     x_i -> sum_j w_ij (R_j x_i + t_j),
// and its deformation gradient picks up both the blended rotations and the
// spatial variation of the weights:
//     F_i = sum_j [ w_ij R_j + (R_j x_i + t_j) (grad w_ij)^T ].
// Weight gradients come from the precomputed least-squares operators, so the
// whole map stays differentiable in the weights and transforms while the rest
// geometry is fixed.

#include <cstdint>
#include <vector>

#include "anisim/ad/ops.hpp"
#include "anisim/geometry/knn.hpp"
#include "anisim/geometry/weight_gradient.hpp"

namespace anisim::deform {

struct ReducedKinematics {
    ad::Tensor rest;                    // [N,3], constant
    std::vector<std::int64_t> nbr;      // [N*K] neighbor indices
    std::int64_t k = 0;
    ad::Tensor grad_coeff;              // [N,3,K], constant
};

inline ReducedKinematics build_kinematics(const ad::Tensor& rest, std::int64_t k) {
    ReducedKinematics kin;
    kin.rest = rest.detached();
    kin.k = k;
    kin.nbr = geom::knn(kin.rest, k);
    kin.grad_coeff = geom::build_gradient_coefficients(kin.rest, kin.nbr, k);
    return kin;
}

inline ad::Tensor weight_gradients(const ad::Tensor& w, const ReducedKinematics& kin) {
    return ad::lsq_gradient(w, kin.grad_coeff, kin.nbr, kin.k);
}

inline ad::Tensor map_positions(const ad::Tensor& w, const ad::Tensor& rot,
                                const ad::Tensor& trans, const ReducedKinematics& kin) {
    return ad::blend_apply(w, rot, trans, kin.rest);
}

inline ad::Tensor map_deformation(const ad::Tensor& w, const ad::Tensor& wgrad,
                                  const ad::Tensor& rot, const ad::Tensor& trans,
                                  const ReducedKinematics& kin) {
    return ad::blend_gradient(w, wgrad, rot, trans, kin.rest);
}

}  // namespace anisim::deform
