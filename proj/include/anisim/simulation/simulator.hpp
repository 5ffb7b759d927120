#pragma once

// Forward dynamics on a trained system. The state lives in reduced handle
// coordinates z (one quaternion + translation per handle, 7J numbers total);
// full positions and deformation gradients are always reconstructed from z
// through the frozen weight field, so the trajectory cannot leave the learned
// subspace. Each frame advances by minimizing the implicit-Euler incremental
// potential
//
//   IP(z) = sum_i m_i/(2 h^2) |x_i(z) - xtilde_i|^2      inertia, xtilde = x + h v
//         + sum_i V_i psi(F_i(z))                        elastic
//         - sum_i m_i g . x_i(z)                         gravity
//         - sum_i f_i . x_i(z)                           applied forces
//         + sum   1/2 kappa_b |x_i(z) - target|^2        soft pins
//         + sum_i 1/2 kappa_f max(0, h_f - n . x_i(z))^2 floor penalty
//
// with damped Newton. Gradients chain the analytic stress through dx/dz and
// dF/dz; the reduced Hessian is Gauss-Newton with each 9x9 stress Hessian
// projected to PSD by eigenvalue clamping, so the search direction is always
// a descent direction and backtracking on the IP value suffices.
//
// The raw quaternion has a gradient null direction along its own axis
// (rotation only sees q/|q|), which would make the system singular; a rank-1
// qhat qhat^T term fills it, and quaternions are renormalized after every
// accepted step so the parametrization never drifts.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anisim/ad/param_store.hpp"
#include "anisim/ad/tensor.hpp"
#include "anisim/deformation/reduced_map.hpp"
#include "anisim/deformation/weight_field.hpp"
#include "anisim/energy/neohookean.hpp"
#include "anisim/errors.hpp"
#include "anisim/simulation/sim_config.hpp"

namespace anisim::sim {

// Everything the inner loop needs, fixed at load time. No network runs during
// stepping; weights, weight gradients, and stiffness depend only on rest
// geometry and training artifacts.
struct FrozenFields {
    ad::Tensor rest;             // [N,3]
    ad::Tensor w;                // [N,J]
    ad::Tensor g;                // [N,J,3] spatial weight gradients
    ad::Tensor e;                // [N,4] stiffness channels
    std::vector<double> volume;  // per point
    double nu = 0.45;
    bool corrected = false;

    std::int64_t num_points() const { return rest.dim(0); }
    std::int64_t num_handles() const { return w.dim(1); }
};

inline FrozenFields freeze_fields(ad::Tensor rest, ad::Tensor w, ad::Tensor g, ad::Tensor e,
                                  std::vector<double> volume, double nu, bool corrected) {
    const std::int64_t n = rest.dim(0);
    check_contract(rest.ndim() == 2 && rest.dim(1) == 3, "freeze_fields: rest is [N,3]");
    check_contract(w.ndim() == 2 && w.dim(0) == n, "freeze_fields: w is [N,J]");
    check_contract(g.ndim() == 3 && g.dim(0) == n && g.dim(1) == w.dim(1) && g.dim(2) == 3,
                   "freeze_fields: g is [N,J,3]");
    check_contract(e.ndim() == 2 && e.dim(0) == n && e.dim(1) == 4, "freeze_fields: e is [N,4]");
    check_contract(static_cast<std::int64_t>(volume.size()) == n,
                   "freeze_fields: volumes cover every point");
    FrozenFields f;
    f.rest = std::move(rest);
    f.w = std::move(w);
    f.g = std::move(g);
    f.e = std::move(e);
    f.volume = std::move(volume);
    f.nu = nu;
    f.corrected = corrected;
    return f;
}

// Rebuild the frozen fields from a training checkpoint: run the weight net
// once over rest geometry, differentiate the weights spatially, and take the
// stored stiffness. Uniform volume split of the scene total.
inline FrozenFields freeze_from_checkpoint(const ad::ParamStore& params, const geom::json& meta,
                                           const ad::Tensor& rest, double total_volume) {
    for (const char* key : {"K", "nu", "corrected_neohookean"})
        if (!meta.contains(key))
            throw ParseError(std::string("checkpoint metadata missing \"") + key + "\"");
    if (!params.has("E")) throw ParseError("checkpoint has no stiffness field \"E\"");
    const std::int64_t n = rest.dim(0);
    const std::int64_t k = meta.at("K").get<std::int64_t>();
    check_contract(n > k, "freeze_from_checkpoint: need more points than neighbors");

    deform::ReducedKinematics kin = deform::build_kinematics(rest, k);
    ad::Tensor w = deform::weight_field(params.all(), rest);
    ad::Tensor g = deform::weight_gradients(w, kin);
    const ad::Tensor& e = params.get("E");
    check_contract(e.ndim() == 2 && e.dim(0) == n && e.dim(1) == 4,
                   "freeze_from_checkpoint: stiffness is [N,4]");
    std::vector<double> volume(static_cast<std::size_t>(n),
                               total_volume / static_cast<double>(n));
    return freeze_fields(rest, std::move(w), std::move(g),
                         ad::Tensor(e.shape(), e.vec()), std::move(volume),
                         meta.at("nu").get<double>(), meta.at("corrected_neohookean").get<bool>());
}

struct SimState {
    ad::Tensor z;       // [J,7] current handle coordinates
    ad::Tensor z_prev;  // [J,7] before the last step
    ad::Tensor x;       // [N,3], always the reduced map of z
    ad::Tensor v;       // [N,3]
    std::int64_t frame = 0;
};

namespace detail {

struct Pose {
    Eigen::Matrix3d rot;
    Eigen::Vector3d trans;
    Eigen::Matrix<double, 9, 4> drot;  // d vec(R)/d q_raw, vec index 3*row+col
};

// Rotation from the raw (unnormalized) quaternion, with its Jacobian chained
// through the normalization.
inline Pose decode_pose(const double* h) {
    const double norm = std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2] + h[3] * h[3]);
    check_contract(norm > 1e-12, "decode_pose: quaternion collapsed to zero");
    Eigen::Vector4d qh(h[0] / norm, h[1] / norm, h[2] / norm, h[3] / norm);
    const double w = qh[0], x = qh[1], y = qh[2], z = qh[3];

    Pose p;
    p.rot << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    p.trans << h[4], h[5], h[6];

    // d vec(R)/d qhat, columns ordered (w,x,y,z)
    Eigen::Matrix<double, 9, 4> dhat;
    dhat << 0, 0, -4 * y, -4 * z,
        -2 * z, 2 * y, 2 * x, -2 * w,
        2 * y, 2 * z, 2 * w, 2 * x,
        2 * z, 2 * y, 2 * x, 2 * w,
        0, -4 * x, 0, -4 * z,
        -2 * x, -2 * w, 2 * z, 2 * y,
        -2 * y, 2 * z, -2 * w, 2 * x,
        2 * x, 2 * w, 2 * z, 2 * y,
        0, -4 * x, -4 * y, 0;
    const Eigen::Matrix4d dnorm =
        (Eigen::Matrix4d::Identity() - qh * qh.transpose()) / norm;
    p.drot = dhat * dnorm;
    return p;
}

inline std::vector<Pose> decode_poses(const ad::Tensor& z) {
    check_contract(z.ndim() == 2 && z.dim(1) == 7, "decode_poses: z is [J,7]");
    std::vector<Pose> poses;
    poses.reserve(static_cast<std::size_t>(z.dim(0)));
    for (std::int64_t j = 0; j < z.dim(0); ++j) poses.push_back(decode_pose(z.data() + 7 * j));
    return poses;
}

// Soft pins collapsed to one quadratic per point: sum_s 1/2 k_s |x - t_s|^2
// = 1/2 K |x|^2 - x.b + 1/2 c with K = sum k_s, b = sum k_s t_s, c = sum k_s |t_s|^2.
struct PinAccum {
    std::vector<double> k;  // [N]
    std::vector<double> b;  // [N*3]
    std::vector<double> c;  // [N]
    bool any = false;
};

inline PinAccum accumulate_pins(const SimConfig& cfg, std::int64_t n) {
    PinAccum acc;
    acc.k.assign(static_cast<std::size_t>(n), 0.0);
    acc.b.assign(static_cast<std::size_t>(3 * n), 0.0);
    acc.c.assign(static_cast<std::size_t>(n), 0.0);
    for (const auto& spec : cfg.boundaries) {
        if (spec.stiffness == 0.0) continue;
        acc.any = true;
        for (std::size_t r = 0; r < spec.points.size(); ++r) {
            const std::int64_t i = spec.points[r];
            acc.k[static_cast<std::size_t>(i)] += spec.stiffness;
            double t2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double t = spec.targets.at2(static_cast<std::int64_t>(r), a);
                acc.b[static_cast<std::size_t>(3 * i + a)] += spec.stiffness * t;
                t2 += t * t;
            }
            acc.c[static_cast<std::size_t>(i)] += spec.stiffness * t2;
        }
    }
    return acc;
}

inline std::vector<double> accumulate_forces(const SimConfig& cfg, std::int64_t n,
                                             std::int64_t frame) {
    std::vector<double> f(static_cast<std::size_t>(3 * n), 0.0);
    for (const auto& spec : cfg.forces) {
        if (!spec.active(frame)) continue;
        for (std::int64_t i : spec.points)
            for (int a = 0; a < 3; ++a)
                f[static_cast<std::size_t>(3 * i + a)] += spec.force[static_cast<std::size_t>(a)];
    }
    return f;
}

}  // namespace detail

struct IpBreakdown {
    double inertia = 0.0;
    double elastic = 0.0;
    double gravity = 0.0;
    double external = 0.0;
    double boundary = 0.0;
    double floor = 0.0;

    double total() const { return inertia + elastic + gravity + external + boundary + floor; }
};

struct ReducedSystem {
    IpBreakdown value;
    Eigen::VectorXd grad;   // 7J
    Eigen::MatrixXd hess;   // 7J x 7J, PSD-projected Gauss-Newton
};

namespace detail {

// One pass over points: IP value, and optionally its reduced gradient and
// Gauss-Newton Hessian. xtilde/fext/pins are per-substep constants.
inline IpBreakdown eval_ip(const FrozenFields& f, const SimConfig& cfg, double h,
                           const ad::Tensor& z, const ad::Tensor& xtilde,
                           const std::vector<double>& fext, const PinAccum& pins,
                           Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
    const std::int64_t n = f.num_points();
    const std::int64_t nj = f.num_handles();
    const std::int64_t dof = 7 * nj;
    check_contract(xtilde.ndim() == 2 && xtilde.dim(0) == n && xtilde.dim(1) == 3,
                   "eval_ip: xtilde is [N,3]");
    const std::vector<Pose> poses = decode_poses(z);
    const double h2 = h * h;
    const Eigen::Vector3d gvec(cfg.gravity[0], cfg.gravity[1], cfg.gravity[2]);
    const Eigen::Vector3d nfloor(cfg.floor.normal[0], cfg.floor.normal[1], cfg.floor.normal[2]);

    IpBreakdown bd;
    if (grad) grad->setZero(dof);
    if (hess) hess->setZero(dof, dof);
    Eigen::Matrix<double, 3, Eigen::Dynamic> jx(3, dof);
    Eigen::Matrix<double, 9, Eigen::Dynamic> jf(9, dof);

    for (std::int64_t i = 0; i < n; ++i) {
        const double* wrow = f.w.vec().data() + i * nj;
        const double* grow = f.g.vec().data() + i * nj * 3;
        const Eigen::Vector3d xbar(f.rest.at2(i, 0), f.rest.at2(i, 1), f.rest.at2(i, 2));
        const double m = cfg.density * f.volume[static_cast<std::size_t>(i)];

        Eigen::Vector3d xi = Eigen::Vector3d::Zero();
        double fm[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
        for (std::int64_t j = 0; j < nj; ++j) {
            const Eigen::Vector3d y = poses[static_cast<std::size_t>(j)].rot * xbar +
                                      poses[static_cast<std::size_t>(j)].trans;
            xi += wrow[j] * y;
            const double* gj = grow + 3 * j;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    fm[3 * r + c] +=
                        wrow[j] * poses[static_cast<std::size_t>(j)].rot(r, c) + y[r] * gj[c];
        }

        // position-space terms
        const Eigen::Vector3d xt(xtilde.at2(i, 0), xtilde.at2(i, 1), xtilde.at2(i, 2));
        const Eigen::Vector3d dx = xi - xt;
        bd.inertia += 0.5 * m / h2 * dx.squaredNorm();
        bd.gravity -= m * gvec.dot(xi);
        const Eigen::Vector3d fx(fext[static_cast<std::size_t>(3 * i)],
                                 fext[static_cast<std::size_t>(3 * i + 1)],
                                 fext[static_cast<std::size_t>(3 * i + 2)]);
        bd.external -= fx.dot(xi);
        double pin_k = 0.0;
        Eigen::Vector3d pin_b = Eigen::Vector3d::Zero();
        if (pins.any) {
            pin_k = pins.k[static_cast<std::size_t>(i)];
            pin_b = Eigen::Map<const Eigen::Vector3d>(pins.b.data() + 3 * i);
            bd.boundary += 0.5 * pin_k * xi.squaredNorm() - xi.dot(pin_b) +
                           0.5 * pins.c[static_cast<std::size_t>(i)];
        }
        double pen = 0.0;
        if (cfg.floor.enabled) {
            pen = cfg.floor.height - nfloor.dot(xi);
            if (pen > 0.0)
                bd.floor += 0.5 * cfg.floor.stiffness * pen * pen;
            else
                pen = 0.0;
        }

        // elastic term
        const double* erow = f.e.vec().data() + 4 * i;
        const energy::ElasticConstants ec = energy::make_constants(erow, f.nu, f.corrected);
        const double vol = f.volume[static_cast<std::size_t>(i)];
        bd.elastic += vol * energy::psi(fm, ec);

        if (!grad && !hess) continue;

        // jacobians of x_i and vec(F_i) in z
        jx.setZero();
        jf.setZero();
        for (std::int64_t j = 0; j < nj; ++j) {
            const Pose& p = poses[static_cast<std::size_t>(j)];
            const double wij = wrow[j];
            const double* gj = grow + 3 * j;
            const std::int64_t col = 7 * j;
            Eigen::Matrix<double, 3, 4> dxq;  // d(R xbar)/d q
            for (int a = 0; a < 4; ++a)
                for (int r = 0; r < 3; ++r)
                    dxq(r, a) = p.drot(3 * r + 0, a) * xbar[0] + p.drot(3 * r + 1, a) * xbar[1] +
                                p.drot(3 * r + 2, a) * xbar[2];
            jx.block<3, 4>(0, col) = wij * dxq;
            for (int r = 0; r < 3; ++r) jx(r, col + 4 + r) = wij;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    const int row = 3 * r + c;
                    for (int a = 0; a < 4; ++a)
                        jf(row, col + a) = wij * p.drot(row, a) + dxq(r, a) * gj[c];
                    jf(row, col + 4 + r) = gj[c];
                }
        }

        const Eigen::Vector3d gx = (m / h2) * dx - m * gvec - fx + (pin_k * xi - pin_b) -
                                   cfg.floor.stiffness * pen * nfloor;
        if (grad) {
            grad->noalias() += jx.transpose() * gx;
            double stress[9];
            energy::stress(fm, ec, stress);
            grad->noalias() += vol * (jf.transpose() * Eigen::Map<Eigen::Matrix<double, 9, 1>>(stress));
        }
        if (hess) {
            const double iso = m / h2 + pin_k;
            hess->noalias() += iso * (jx.transpose() * jx);
            if (pen > 0.0) {
                const Eigen::RowVectorXd nrow = nfloor.transpose() * jx;
                hess->noalias() += cfg.floor.stiffness * (nrow.transpose() * nrow);
            }
            double hraw[81];
            energy::stress_hessian(fm, ec, hraw);
            Eigen::Map<Eigen::Matrix<double, 9, 9, Eigen::RowMajor>> hmat(hraw);
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(hmat);
            const Eigen::Matrix<double, 9, 9> hpsd = es.eigenvectors() *
                                                     es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                                                     es.eigenvectors().transpose();
            hess->noalias() += vol * (jf.transpose() * hpsd * jf);
        }
    }

    const double total = bd.total();
    if (!std::isfinite(total)) {
        const char* term = !std::isfinite(bd.elastic)   ? "elastic energy"
                           : !std::isfinite(bd.inertia) ? "inertia"
                           : !std::isfinite(bd.floor)   ? "floor penalty"
                                                        : "potential";
        throw NumericFailure("incremental_potential", std::string(term) + " is non-finite");
    }
    return bd;
}

}  // namespace detail

// Positions of every point under the reduced coordinates, plain double path.
inline ad::Tensor reduced_positions(const FrozenFields& f, const ad::Tensor& z) {
    const std::vector<detail::Pose> poses = detail::decode_poses(z);
    const std::int64_t n = f.num_points(), nj = f.num_handles();
    ad::Tensor out({n, 3});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* wrow = f.w.vec().data() + i * nj;
        const Eigen::Vector3d xbar(f.rest.at2(i, 0), f.rest.at2(i, 1), f.rest.at2(i, 2));
        Eigen::Vector3d xi = Eigen::Vector3d::Zero();
        for (std::int64_t j = 0; j < nj; ++j)
            xi += wrow[j] * (poses[static_cast<std::size_t>(j)].rot * xbar +
                             poses[static_cast<std::size_t>(j)].trans);
        for (int a = 0; a < 3; ++a) out.data()[3 * i + a] = xi[a];
    }
    return out;
}

inline ad::Tensor identity_coordinates(std::int64_t num_handles) {
    ad::Tensor z({num_handles, 7});
    for (std::int64_t j = 0; j < num_handles; ++j) z.data()[7 * j] = 1.0;
    return z;
}

inline SimState init_state(const FrozenFields& f, const ad::Tensor* z0 = nullptr) {
    SimState s;
    s.z = z0 ? ad::Tensor(z0->shape(), z0->vec()) : identity_coordinates(f.num_handles());
    check_contract(s.z.ndim() == 2 && s.z.dim(0) == f.num_handles() && s.z.dim(1) == 7,
                   "init_state: z is [J,7]");
    s.z_prev = ad::Tensor(s.z.shape(), s.z.vec());
    s.x = reduced_positions(f, s.z);
    s.v = ad::Tensor({f.num_points(), 3});
    return s;
}

// Incremental potential at trial coordinates z, one substep of length h ahead
// of the state. Frame index selects the active force windows.
inline IpBreakdown incremental_potential(const FrozenFields& f, const SimConfig& cfg,
                                         const SimState& state, const ad::Tensor& z, double h) {
    const std::int64_t n = f.num_points();
    ad::Tensor xtilde({n, 3});
    for (std::int64_t i = 0; i < 3 * n; ++i)
        xtilde.data()[i] = state.x[i] + h * state.v[i];
    return detail::eval_ip(f, cfg, h, z, xtilde, detail::accumulate_forces(cfg, n, state.frame),
                           detail::accumulate_pins(cfg, n), nullptr, nullptr);
}

// Value, reduced gradient, and projected Hessian in one pass; the keystone
// chain-rule surface for tests.
inline ReducedSystem reduced_system(const FrozenFields& f, const SimConfig& cfg,
                                    const SimState& state, const ad::Tensor& z, double h,
                                    bool want_hessian = true) {
    const std::int64_t n = f.num_points();
    ad::Tensor xtilde({n, 3});
    for (std::int64_t i = 0; i < 3 * n; ++i)
        xtilde.data()[i] = state.x[i] + h * state.v[i];
    ReducedSystem sys;
    sys.value = detail::eval_ip(f, cfg, h, z, xtilde,
                                detail::accumulate_forces(cfg, n, state.frame),
                                detail::accumulate_pins(cfg, n), &sys.grad,
                                want_hessian ? &sys.hess : nullptr);
    return sys;
}

struct StepDiag {
    std::int64_t iters = 0;   // accepted Newton iterations
    double residual = 0.0;    // reduced gradient norm at exit
    bool stalled = false;     // line search gave up before convergence
    IpBreakdown energy;       // at the accepted state
    std::vector<double> residual_history;  // one entry per evaluated iterate
};

// One implicit-Euler substep of length h: minimize IP from the current state,
// then update velocities with the damping factor.
inline StepDiag newton_step(const FrozenFields& f, const SimConfig& cfg, SimState& state,
                            double h) {
    const std::int64_t n = f.num_points();
    const std::int64_t nj = f.num_handles();
    const std::int64_t dof = 7 * nj;
    ad::Tensor xtilde({n, 3});
    for (std::int64_t i = 0; i < 3 * n; ++i)
        xtilde.data()[i] = state.x[i] + h * state.v[i];
    const std::vector<double> fext = detail::accumulate_forces(cfg, n, state.frame);
    const detail::PinAccum pins = detail::accumulate_pins(cfg, n);

    ad::Tensor z(state.z.shape(), state.z.vec());
    Eigen::VectorXd grad(dof);
    Eigen::MatrixXd hess(dof, dof);
    StepDiag diag;
    IpBreakdown bd;

    for (std::int64_t iter = 0; iter <= cfg.newton.max_iters; ++iter) {
        bd = detail::eval_ip(f, cfg, h, z, xtilde, fext, pins, &grad, &hess);
        diag.residual = grad.norm();
        diag.residual_history.push_back(diag.residual);
        if (diag.residual <= cfg.newton.tol || iter == cfg.newton.max_iters) break;

        // fill the quaternion-scale null space and keep the factorization away
        // from exact singularity
        const double hscale = hess.diagonal().cwiseAbs().maxCoeff() + 1.0;
        for (std::int64_t j = 0; j < nj; ++j) {
            const Eigen::Vector4d qh =
                Eigen::Map<const Eigen::Vector4d>(z.data() + 7 * j).normalized();
            hess.block<4, 4>(7 * j, 7 * j) += hscale * (qh * qh.transpose());
        }
        hess.diagonal().array() += 1e-12 * hscale;

        const Eigen::VectorXd dz = hess.ldlt().solve(-grad);
        if (!dz.allFinite()) throw NumericFailure("newton_step", "search direction is non-finite");

        double step = 1.0;
        bool accepted = false;
        for (std::int64_t bt = 0; bt < cfg.newton.max_backtracks; ++bt) {
            ad::Tensor trial(z.shape(), z.vec());
            for (std::int64_t d = 0; d < dof; ++d) trial.data()[d] += step * dz[d];
            IpBreakdown trial_bd;
            bool finite = true;
            try {
                trial_bd = detail::eval_ip(f, cfg, h, trial, xtilde, fext, pins, nullptr, nullptr);
            } catch (const NumericFailure&) {
                finite = false;  // overshot into an inverted configuration; halve and retry
            }
            if (finite && trial_bd.total() <= bd.total()) {
                z = std::move(trial);
                // renormalize so the raw quaternion never drifts from unit scale
                for (std::int64_t j = 0; j < nj; ++j) {
                    Eigen::Map<Eigen::Vector4d> q(z.data() + 7 * j);
                    check_contract(q.norm() > 1e-12, "newton_step: quaternion collapsed");
                    q /= q.norm();
                }
                accepted = true;
                break;
            }
            step *= cfg.newton.backtrack;
        }
        if (!accepted) {
            diag.stalled = true;  // zero step accepted; nothing left to try
            break;
        }
        ++diag.iters;
    }

    // advance: positions from the accepted coordinates, damped velocity update
    ad::Tensor x_new = reduced_positions(f, z);
    const double vscale = 1.0 - cfg.damping * h;
    ad::Tensor v_new({n, 3});
    for (std::int64_t i = 0; i < 3 * n; ++i)
        v_new.data()[i] = (x_new[i] - state.x[i]) / h * vscale;
    state.z_prev = std::move(state.z);
    state.z = std::move(z);
    state.x = std::move(x_new);
    state.v = std::move(v_new);
    diag.energy = bd;
    return diag;
}

struct FrameRecord {
    std::int64_t frame = 0;
    std::int64_t iters = 0;   // summed over substeps
    double residual = 0.0;    // last substep exit residual
    bool stalled = false;
    IpBreakdown energy;       // at the end of the frame
    double kinetic = 0.0;
};

struct SimResult {
    std::vector<ad::Tensor> trajectory;  // one [N,3] snapshot per completed frame
    std::vector<FrameRecord> diagnostics;
    SimState state;
    bool aborted = false;
    std::string abort_reason;
};

inline SimResult simulate(const FrozenFields& f, const SimConfig& cfg,
                          const SimState* init = nullptr) {
    cfg.validate();
    check_contract(f.num_points() > 0 && f.num_handles() > 0, "simulate: empty system");
    SimResult result;
    result.state = init ? *init : init_state(f);
    const double h = cfg.dt / static_cast<double>(cfg.substeps);

    for (std::int64_t frame = 0; frame < cfg.num_frames; ++frame) {
        result.state.frame = frame;
        FrameRecord rec;
        rec.frame = frame;
        try {
            for (std::int64_t s = 0; s < cfg.substeps; ++s) {
                const StepDiag diag = newton_step(f, cfg, result.state, h);
                rec.iters += diag.iters;
                rec.residual = diag.residual;
                rec.stalled = rec.stalled || diag.stalled;
                rec.energy = diag.energy;
            }
        } catch (const NumericFailure& nf) {
            result.aborted = true;
            result.abort_reason = "frame " + std::to_string(frame) + ": " + nf.what();
            break;
        }
        double ke = 0.0;
        for (std::int64_t i = 0; i < f.num_points(); ++i) {
            const double m = cfg.density * f.volume[static_cast<std::size_t>(i)];
            for (int a = 0; a < 3; ++a) {
                const double vi = result.state.v[3 * i + a];
                ke += 0.5 * m * vi * vi;
            }
        }
        rec.kinetic = ke;
        result.trajectory.push_back(ad::Tensor(result.state.x.shape(), result.state.x.vec()));
        result.diagnostics.push_back(rec);
    }
    return result;
}

}  // namespace anisim::sim
