#pragma once

// Synthetic point-cloud scenes: a rest configuration plus one or more observed
// trajectories of the same points. Generators are fully deterministic in the
// seed. Every built-in covers a distinct regime the reduced model has to
// handle: a hinged joint, a clean separation, a serial chain, independent
// bodies in free fall, and a static cloud with no observations at all.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "anisim/ad/tensor.hpp"
#include "anisim/errors.hpp"
#include "anisim/support/rng.hpp"

namespace anisim::geom {

struct SceneSpec {
    std::string name = "two_cube_hinge";
    std::int64_t num_points = 1000;
    std::int64_t num_frames = 30;
    std::int64_t num_trajectories = 1;
    double dt = 1.0 / 30.0;
    std::uint64_t seed = 0;

    double hinge_angle = 0.6;      // final rotation of the top cube, radians
    double split_distance = 1.5;   // final offset of the separating cube
    double rope_bend = 1.2;        // accumulated bend across all joints, radians
    std::int64_t rope_segments = 8;
    std::int64_t drop_bodies = 3;
    double gravity = 9.81;
};

struct SceneData {
    std::string name;
    double dt = 1.0 / 30.0;
    bool tracked = true;
    double total_volume = 1.0;
    double density = 1.0;
    ad::Tensor rest;                                      // [N,3]
    std::vector<std::vector<ad::Tensor>> trajectories;    // per trajectory, frames of [N,3]

    std::int64_t num_points() const { return rest.defined() ? rest.dim(0) : 0; }
    std::int64_t num_frames() const {
        return trajectories.empty() ? 0 : static_cast<std::int64_t>(trajectories[0].size());
    }
};

namespace detail {

inline ad::Tensor uniform_box(Rng& rng, std::int64_t n, const double lo[3], const double hi[3]) {
    ad::Tensor pts({n, 3});
    for (std::int64_t i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d)
            pts.data()[3 * i + d] = rng.uniform(lo[d], hi[d]);
    return pts;
}

inline void rotate_z_about(double* p, const double pivot[3], double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double x = p[0] - pivot[0], y = p[1] - pivot[1];
    p[0] = pivot[0] + c * x - s * y;
    p[1] = pivot[1] + s * x + c * y;
}

}  // namespace detail

// Two unit cubes sharing the corner at the origin. Rows [0, N/2) sample the
// bottom cube [-1,0]^3 and the rest the top cube [0,1]^3; callers that need
// per-body membership rely on that row split.
inline std::int64_t two_cube_bottom_count(std::int64_t n) { return n / 2; }

inline SceneData generate_two_cubes(const SceneSpec& spec, bool hinge) {
    check_contract(spec.num_points >= 2 && spec.num_frames >= 2,
                   "two_cube scene: need at least 2 points and 2 frames");
    SceneData out;
    out.name = spec.name;
    out.dt = spec.dt;
    out.tracked = true;
    out.total_volume = 2.0;

    Rng rng(spec.seed);
    const std::int64_t n_bottom = two_cube_bottom_count(spec.num_points);
    const double blo[3] = {-1, -1, -1}, bhi[3] = {0, 0, 0};
    const double tlo[3] = {0, 0, 0}, thi[3] = {1, 1, 1};
    ad::Tensor bottom = detail::uniform_box(rng, n_bottom, blo, bhi);
    ad::Tensor top = detail::uniform_box(rng, spec.num_points - n_bottom, tlo, thi);
    out.rest = ad::Tensor({spec.num_points, 3});
    std::copy(bottom.vec().begin(), bottom.vec().end(), out.rest.data());
    std::copy(top.vec().begin(), top.vec().end(), out.rest.data() + 3 * n_bottom);

    for (std::int64_t r = 0; r < spec.num_trajectories; ++r) {
        // trajectories differ by how far the motion runs
        const double reach = static_cast<double>(r + 1) / static_cast<double>(spec.num_trajectories);
        std::vector<ad::Tensor> frames;
        for (std::int64_t t = 0; t < spec.num_frames; ++t) {
            const double s = static_cast<double>(t) / static_cast<double>(spec.num_frames - 1);
            ad::Tensor frame(out.rest.shape(), out.rest.vec());
            if (hinge) {
                const double pivot[3] = {0, 0, 0};
                for (std::int64_t i = n_bottom; i < spec.num_points; ++i)
                    detail::rotate_z_about(frame.data() + 3 * i, pivot,
                                           spec.hinge_angle * reach * s);
            } else {
                for (std::int64_t i = n_bottom; i < spec.num_points; ++i)
                    frame.data()[3 * i] += spec.split_distance * reach * s;
            }
            frames.push_back(std::move(frame));
        }
        out.trajectories.push_back(std::move(frames));
    }
    return out;
}

// Serial chain along +x, fixed at x=0: `rope_segments` rigid links of length
// 0.5 and square cross-section 0.12, every joint sharing the same bend angle
// so the chain curls into an arc as the ramp progresses.
inline SceneData generate_rope(const SceneSpec& spec) {
    check_contract(spec.rope_segments >= 2, "rope scene: need at least 2 segments");
    check_contract(spec.num_points >= spec.rope_segments && spec.num_frames >= 2,
                   "rope scene: too few points or frames");
    SceneData out;
    out.name = spec.name;
    out.dt = spec.dt;
    out.tracked = true;
    const double seg_len = 0.5, half_w = 0.06;
    const double length = seg_len * static_cast<double>(spec.rope_segments);
    out.total_volume = length * (2 * half_w) * (2 * half_w);

    Rng rng(spec.seed);
    const double lo[3] = {0, -half_w, -half_w}, hi[3] = {length, half_w, half_w};
    out.rest = detail::uniform_box(rng, spec.num_points, lo, hi);

    const std::int64_t joints = spec.rope_segments - 1;
    for (std::int64_t r = 0; r < spec.num_trajectories; ++r) {
        const double reach = static_cast<double>(r + 1) / static_cast<double>(spec.num_trajectories);
        std::vector<ad::Tensor> frames;
        for (std::int64_t t = 0; t < spec.num_frames; ++t) {
            const double s = static_cast<double>(t) / static_cast<double>(spec.num_frames - 1);
            const double per_joint = spec.rope_bend * reach * s / static_cast<double>(joints);
            ad::Tensor frame(out.rest.shape(), out.rest.vec());
            for (std::int64_t i = 0; i < spec.num_points; ++i) {
                double* p = frame.data() + 3 * i;
                const std::int64_t seg = std::min<std::int64_t>(
                    static_cast<std::int64_t>(std::floor(out.rest.data()[3 * i] / seg_len)),
                    spec.rope_segments - 1);
                // farthest joint first, so each pivot is still at its rest place
                for (std::int64_t j = seg - 1; j >= 0; --j) {
                    const double pivot[3] = {seg_len * static_cast<double>(j + 1), 0, 0};
                    detail::rotate_z_about(p, pivot, per_joint);
                }
            }
            frames.push_back(std::move(frame));
        }
        out.trajectories.push_back(std::move(frames));
    }
    return out;
}

// Independent small cubes released from rest at staggered heights; exact
// ballistic drop, so frame t sits at z0 - g (t dt)^2 / 2.
inline SceneData generate_multibody_drop(const SceneSpec& spec) {
    check_contract(spec.drop_bodies >= 1 && spec.num_points >= spec.drop_bodies &&
                       spec.num_frames >= 2,
                   "drop scene: bad sizes");
    SceneData out;
    out.name = spec.name;
    out.dt = spec.dt;
    out.tracked = true;
    const double side = 0.4;
    out.total_volume = side * side * side * static_cast<double>(spec.drop_bodies);

    Rng rng(spec.seed);
    out.rest = ad::Tensor({spec.num_points, 3});
    const std::int64_t base = spec.num_points / spec.drop_bodies;
    std::int64_t row = 0;
    for (std::int64_t b = 0; b < spec.drop_bodies; ++b) {
        const std::int64_t count =
            b + 1 == spec.drop_bodies ? spec.num_points - row : base;
        const double cx = 1.2 * static_cast<double>(b) -
                          0.6 * static_cast<double>(spec.drop_bodies - 1);
        const double cz = 2.0 + 0.5 * static_cast<double>(b);
        const double lo[3] = {cx - side / 2, -side / 2, cz - side / 2};
        const double hi[3] = {cx + side / 2, side / 2, cz + side / 2};
        ad::Tensor cluster = detail::uniform_box(rng, count, lo, hi);
        std::copy(cluster.vec().begin(), cluster.vec().end(), out.rest.data() + 3 * row);
        row += count;
    }

    for (std::int64_t r = 0; r < spec.num_trajectories; ++r) {
        std::vector<ad::Tensor> frames;
        for (std::int64_t t = 0; t < spec.num_frames; ++t) {
            const double fall =
                0.5 * spec.gravity * (static_cast<double>(t) * spec.dt) *
                (static_cast<double>(t) * spec.dt);
            ad::Tensor frame(out.rest.shape(), out.rest.vec());
            for (std::int64_t i = 0; i < spec.num_points; ++i) frame.data()[3 * i + 2] -= fall;
            frames.push_back(std::move(frame));
        }
        out.trajectories.push_back(std::move(frames));
    }
    return out;
}

// A cloud with no observed motion at all; trains in the unobserved regime.
inline SceneData generate_soft_none(const SceneSpec& spec) {
    check_contract(spec.num_points >= 1, "soft_none scene: need points");
    SceneData out;
    out.name = spec.name;
    out.dt = spec.dt;
    out.tracked = false;
    out.total_volume = 1.0;
    Rng rng(spec.seed);
    const double lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
    out.rest = detail::uniform_box(rng, spec.num_points, lo, hi);
    return out;
}

inline SceneData generate_scene(const SceneSpec& spec) {
    if (spec.name == "two_cube_hinge") return generate_two_cubes(spec, true);
    if (spec.name == "two_cube_split") return generate_two_cubes(spec, false);
    if (spec.name == "rope_fixed_end") return generate_rope(spec);
    if (spec.name == "multibody_drop") return generate_multibody_drop(spec);
    if (spec.name == "soft_none") return generate_soft_none(spec);
    throw ConfigError("unknown scene '" + spec.name + "'");
}

}  // namespace anisim::geom
