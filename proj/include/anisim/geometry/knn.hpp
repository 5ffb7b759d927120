#pragma once

// Exact k-nearest-neighbor search over point clouds. The production path bins
// points into a uniform grid and expands search shells until the candidate
// bound beats the k-th best distance; the quadratic scan stays available as
// the oracle the grid is tested against. Both order neighbors by squared
// distance with index as the tiebreak, exclude the query point, and evaluate
// distances with the same expression so results agree bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "anisim/ad/tensor.hpp"
#include "anisim/errors.hpp"

namespace anisim::geom {

namespace detail {
inline double dist_sq(const double* a, const double* b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline void check_points(const char* op, const ad::Tensor& pts) {
    check_contract(pts.ndim() == 2 && pts.dim(1) == 3,
                   std::string(op) + ": expects points [N,3]");
}
}  // namespace detail

inline std::vector<std::int64_t> knn_brute_force(const ad::Tensor& pts, std::int64_t k) {
    detail::check_points("knn_brute_force", pts);
    const std::int64_t n = pts.dim(0);
    check_contract(k >= 1 && k < n, "knn: need 1 <= k < N");
    std::vector<std::int64_t> out(static_cast<std::size_t>(n * k));
    std::vector<std::pair<double, std::int64_t>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (std::int64_t i = 0; i < n; ++i) {
        cand.clear();
        for (std::int64_t q = 0; q < n; ++q) {
            if (q == i) continue;
            cand.emplace_back(detail::dist_sq(pts.data() + 3 * i, pts.data() + 3 * q), q);
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (std::int64_t m = 0; m < k; ++m) out[i * k + m] = cand[m].second;
    }
    return out;
}

inline std::vector<std::int64_t> knn(const ad::Tensor& pts, std::int64_t k) {
    detail::check_points("knn", pts);
    const std::int64_t n = pts.dim(0);
    check_contract(k >= 1 && k < n, "knn: need 1 <= k < N");

    double lo[3], hi[3];
    for (int d = 0; d < 3; ++d) {
        lo[d] = pts.data()[d];
        hi[d] = pts.data()[d];
    }
    for (std::int64_t i = 1; i < n; ++i)
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], pts.data()[3 * i + d]);
            hi[d] = std::max(hi[d], pts.data()[3 * i + d]);
        }

    // aim for a handful of points per cell; degenerate extents collapse to one
    double vol = 1.0;
    int live_dims = 0;
    for (int d = 0; d < 3; ++d) {
        if (hi[d] - lo[d] > 0.0) {
            vol *= hi[d] - lo[d];
            ++live_dims;
        }
    }
    const double target_h =
        live_dims > 0
            ? std::pow(vol * 8.0 / static_cast<double>(n), 1.0 / static_cast<double>(live_dims))
            : 1.0;
    std::int64_t dims[3];
    double cell[3];
    for (int d = 0; d < 3; ++d) {
        const double ext = hi[d] - lo[d];
        dims[d] = ext > 0.0 ? std::max<std::int64_t>(
                                  1, static_cast<std::int64_t>(std::floor(ext / target_h)))
                            : 1;
        cell[d] = ext > 0.0 ? ext / static_cast<double>(dims[d])
                            : 1.0;  // width unused when only one slab exists
    }
    const double min_cell = std::min({cell[0], cell[1], cell[2]});

    auto cell_of = [&](const double* p, std::int64_t* c) {
        for (int d = 0; d < 3; ++d) {
            std::int64_t v =
                static_cast<std::int64_t>(std::floor((p[d] - lo[d]) / cell[d]));
            c[d] = std::clamp<std::int64_t>(v, 0, dims[d] - 1);
        }
    };
    auto flat = [&](std::int64_t cx, std::int64_t cy, std::int64_t cz) {
        return (cx * dims[1] + cy) * dims[2] + cz;
    };

    // counting-sort points into CSR cell buckets
    const std::int64_t num_cells = dims[0] * dims[1] * dims[2];
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_cells + 1), 0);
    std::vector<std::int64_t> point_cell(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t c[3];
        cell_of(pts.data() + 3 * i, c);
        point_cell[i] = flat(c[0], c[1], c[2]);
        ++counts[point_cell[i] + 1];
    }
    for (std::int64_t c = 0; c < num_cells; ++c) counts[c + 1] += counts[c];
    std::vector<std::int64_t> bucket(static_cast<std::size_t>(n));
    std::vector<std::int64_t> cursor(counts.begin(), counts.end() - 1);
    for (std::int64_t i = 0; i < n; ++i) bucket[cursor[point_cell[i]]++] = i;

    std::vector<std::int64_t> out(static_cast<std::size_t>(n * k));
    std::vector<std::pair<double, std::int64_t>> cand;
    const std::int64_t max_ring = std::max({dims[0], dims[1], dims[2]});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* p = pts.data() + 3 * i;
        std::int64_t c[3];
        cell_of(p, c);
        cand.clear();
        for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
            // a cell at Chebyshev distance ring+1 holds no point closer than
            // ring * min_cell, so once k candidates beat that bound, stop
            if (static_cast<std::int64_t>(cand.size()) >= k) {
                std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
                const double kth = cand[k - 1].first;
                const double bound = static_cast<double>(ring - 1) * min_cell;
                if (ring >= 1 && bound > 0.0 && bound * bound > kth) break;
            }
            bool visited_any = false;
            for (std::int64_t cx = std::max<std::int64_t>(0, c[0] - ring);
                 cx <= std::min(dims[0] - 1, c[0] + ring); ++cx)
                for (std::int64_t cy = std::max<std::int64_t>(0, c[1] - ring);
                     cy <= std::min(dims[1] - 1, c[1] + ring); ++cy)
                    for (std::int64_t cz = std::max<std::int64_t>(0, c[2] - ring);
                         cz <= std::min(dims[2] - 1, c[2] + ring); ++cz) {
                        const bool on_shell = std::max({std::abs(cx - c[0]), std::abs(cy - c[1]),
                                                        std::abs(cz - c[2])}) == ring;
                        if (!on_shell) continue;
                        visited_any = true;
                        const std::int64_t cid = flat(cx, cy, cz);
                        for (std::int64_t s = counts[cid]; s < counts[cid + 1]; ++s) {
                            const std::int64_t q = bucket[s];
                            if (q == i) continue;
                            cand.emplace_back(detail::dist_sq(p, pts.data() + 3 * q), q);
                        }
                    }
            if (!visited_any && ring > 0 && static_cast<std::int64_t>(cand.size()) >= k) break;
        }
        check_contract(static_cast<std::int64_t>(cand.size()) >= k, "knn: internal shortfall");
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (std::int64_t m = 0; m < k; ++m) out[i * k + m] = cand[m].second;
    }
    return out;
}

}  // namespace anisim::geom
