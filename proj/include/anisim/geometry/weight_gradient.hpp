#pragma once

// Builds the per-point linear operators that recover a scalar field's spatial
// gradient from its neighbor differences. For point i with neighbor offsets
// D (K x 3 rows x_n - x_i), the moment matrix M = D^T D is solved with a
// Tikhonov floor scaled to the mean neighbor spacing, followed by one
// iterative-refinement pass; the result folds into a single 3 x K matrix per
// point, so downstream consumers stay linear in the field values. Refinement
// squares the regularization bias, which keeps affine fields exact to well
// below 1e-9 on sane neighborhoods.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "anisim/ad/tensor.hpp"
#include "anisim/errors.hpp"

namespace anisim::geom {

inline ad::Tensor build_gradient_coefficients(const ad::Tensor& rest,
                                              const std::vector<std::int64_t>& idx,
                                              std::int64_t k) {
    check_contract(rest.ndim() == 2 && rest.dim(1) == 3,
                   "build_gradient_coefficients: expects points [N,3]");
    const std::int64_t n = rest.dim(0);
    check_contract(k >= 3, "build_gradient_coefficients: need at least 3 neighbors");
    check_contract(static_cast<std::int64_t>(idx.size()) == n * k,
                   "build_gradient_coefficients: index table size");

    double dist_acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t m = 0; m < k; ++m) {
            const double* a = rest.data() + 3 * i;
            const double* b = rest.data() + 3 * idx[i * k + m];
            const double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
            dist_acc += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    const double mean_dist = dist_acc / static_cast<double>(n * k);
    const double lambda = 1e-8 * mean_dist * mean_dist;

    ad::Tensor coeff({n, 3, k});
    Eigen::MatrixXd d(k, 3);
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = rest.data() + 3 * i;
        for (std::int64_t m = 0; m < k; ++m) {
            const double* xn = rest.data() + 3 * idx[i * k + m];
            for (int a = 0; a < 3; ++a) d(m, a) = xn[a] - xi[a];
        }
        const Eigen::Matrix3d moment = d.transpose() * d;
        const Eigen::Matrix3d reg_inv =
            (moment + lambda * Eigen::Matrix3d::Identity()).inverse();
        // g = inv*b then one refinement step collapses to a single operator
        const Eigen::Matrix3d refined =
            2.0 * reg_inv - reg_inv * moment * reg_inv;
        const Eigen::Matrix<double, 3, Eigen::Dynamic> op = refined * d.transpose();
        for (int a = 0; a < 3; ++a)
            for (std::int64_t m = 0; m < k; ++m) coeff.data()[(i * 3 + a) * k + m] = op(a, m);
    }
    return coeff;
}

}  // namespace anisim::geom
