#pragma once

// Point set comparison: exact nearest-neighbor correspondences, symmetric
// Chamfer discrepancy on squared distances, and the tracked per-index L2
// error. Correspondence search is a direct scan (deterministic, ties resolved
// toward the lower index); the sets this project compares stay in the low
// thousands, where the scan is already memory-bound.

#include <cstdint>
#include <vector>

#include "anisim/ad/tensor.hpp"
#include "anisim/geometry/knn.hpp"

namespace anisim::geom {

// For every row of a, the index of the closest row of b.
inline std::vector<std::int64_t> nearest_indices(const ad::Tensor& a, const ad::Tensor& b) {
    detail::check_points("nearest_indices", a);
    detail::check_points("nearest_indices", b);
    const std::int64_t n = a.dim(0), m = b.dim(0);
    check_contract(m > 0, "nearest_indices: empty target set");
    std::vector<std::int64_t> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double* pa = a.data() + 3 * i;
        double best = detail::dist_sq(pa, b.data());
        std::int64_t best_j = 0;
        for (std::int64_t j = 1; j < m; ++j) {
            const double d = detail::dist_sq(pa, b.data() + 3 * j);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        out[i] = best_j;
    }
    return out;
}

// mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2.
inline double chamfer_sq(const ad::Tensor& a, const ad::Tensor& b) {
    const std::vector<std::int64_t> ab = nearest_indices(a, b);
    const std::vector<std::int64_t> ba = nearest_indices(b, a);
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.dim(0); ++i)
        acc += detail::dist_sq(a.data() + 3 * i, b.data() + 3 * ab[i]);
    double result = acc / static_cast<double>(a.dim(0));
    acc = 0.0;
    for (std::int64_t j = 0; j < b.dim(0); ++j)
        acc += detail::dist_sq(b.data() + 3 * j, a.data() + 3 * ba[j]);
    return result + acc / static_cast<double>(b.dim(0));
}

// mean_i |a_i - b_i|^2 under known row correspondence.
inline double l2_sq(const ad::Tensor& a, const ad::Tensor& b) {
    detail::check_points("l2_sq", a);
    check_contract(a.same_shape(b), "l2_sq: shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.dim(0); ++i)
        acc += detail::dist_sq(a.data() + 3 * i, b.data() + 3 * i);
    return acc / static_cast<double>(a.dim(0));
}

inline double bbox_diag_sq(const ad::Tensor& pts) {
    detail::check_points("bbox_diag_sq", pts);
    check_contract(pts.dim(0) > 0, "bbox_diag_sq: empty set");
    double lo[3], hi[3];
    for (int d = 0; d < 3; ++d) lo[d] = hi[d] = pts.data()[d];
    for (std::int64_t i = 1; i < pts.dim(0); ++i)
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], pts.data()[3 * i + d]);
            hi[d] = std::max(hi[d], pts.data()[3 * i + d]);
        }
    double acc = 0.0;
    for (int d = 0; d < 3; ++d) acc += (hi[d] - lo[d]) * (hi[d] - lo[d]);
    return acc;
}

}  // namespace anisim::geom
