#pragma once

// Anisotropic Neo-Hookean energy density over deformation gradients F:
//
//   psi = mu/2 (tr(F^T F) - 3) + lambda/2 (det F - 1)^2
//       + sum_k alpha_k/2 (C_kk - 1)^2            C = F^T F, world axes
//       [ - mu ln(det F) ]                        optional rest-stress fix
//
// The axis terms penalize stretch along x, y, z independently, which is what
// lets a learned stiffness field encode directional compliance (a hinge soft
// around one axis, a rod stiff along its length). Per-axis moduli come from a
// 4-channel stiffness vector (isotropic + three axes) through the standard
// Lame relations.
//
// Three consumers, one set of formulas: a plain-double path with analytic
// first and second derivatives for the implicit solver, and a taped batched
// path for training. Both are validated against finite differences of psi,
// and against each other, in the test suite.

#include <cmath>
#include <cstdint>

#include "anisim/ad/ops.hpp"

namespace anisim::energy {

struct ElasticConstants {
    double mu = 0.0;
    double lambda = 0.0;
    double alpha[3] = {0.0, 0.0, 0.0};
    bool corrected = false;
};

inline double lame_mu(double e, double nu) { return e / (2.0 * (1.0 + nu)); }
inline double lame_lambda(double e, double nu) {
    return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
}

// e = (E_iso, E_x, E_y, E_z)
inline ElasticConstants make_constants(const double e[4], double nu, bool corrected) {
    check_contract(nu > -1.0 && nu < 0.5, "make_constants: Poisson ratio out of range");
    ElasticConstants c;
    c.mu = lame_mu(e[0], nu);
    c.lambda = lame_lambda(e[0], nu);
    for (int k = 0; k < 3; ++k) c.alpha[k] = e[1 + k] / (2.0 * (1.0 + nu));
    c.corrected = corrected;
    return c;
}

namespace detail {
inline double det3(const double* f) {
    return f[0] * (f[4] * f[8] - f[5] * f[7]) - f[1] * (f[3] * f[8] - f[5] * f[6]) +
           f[2] * (f[3] * f[7] - f[4] * f[6]);
}

inline void cof3(const double* f, double* c) {
    c[0] = f[4] * f[8] - f[5] * f[7];
    c[1] = -(f[3] * f[8] - f[5] * f[6]);
    c[2] = f[3] * f[7] - f[4] * f[6];
    c[3] = -(f[1] * f[8] - f[2] * f[7]);
    c[4] = f[0] * f[8] - f[2] * f[6];
    c[5] = -(f[0] * f[7] - f[1] * f[6]);
    c[6] = f[1] * f[5] - f[2] * f[4];
    c[7] = -(f[0] * f[5] - f[2] * f[3]);
    c[8] = f[0] * f[4] - f[1] * f[3];
}

// sum_{b,d} eps_{i p b} eps_{j q d} F_{b d}, the curvature of det F
inline double det_hess(const double* f, int i, int j, int p, int q) {
    if (i == p || j == q) return 0.0;
    const int b = 3 - i - p, d = 3 - j - q;
    const double si = (p == (i + 1) % 3) ? 1.0 : -1.0;
    const double sj = (q == (j + 1) % 3) ? 1.0 : -1.0;
    return si * sj * f[3 * b + d];
}
}  // namespace detail

inline double psi(const double* f, const ElasticConstants& c) {
    double i1 = 0.0;
    for (int i = 0; i < 9; ++i) i1 += f[i] * f[i];
    const double j = detail::det3(f);
    double value = 0.5 * c.mu * (i1 - 3.0) + 0.5 * c.lambda * (j - 1.0) * (j - 1.0);
    for (int k = 0; k < 3; ++k) {
        const double ckk =
            f[k] * f[k] + f[3 + k] * f[3 + k] + f[6 + k] * f[6 + k];
        value += 0.5 * c.alpha[k] * (ckk - 1.0) * (ckk - 1.0);
    }
    if (c.corrected) value -= c.mu * std::log(j);
    return value;
}

// dpsi/dF, row-major
inline void stress(const double* f, const ElasticConstants& c, double* p) {
    double cof[9];
    detail::cof3(f, cof);
    const double j = detail::det3(f);
    double axis[3];
    for (int k = 0; k < 3; ++k) {
        const double ckk =
            f[k] * f[k] + f[3 + k] * f[3 + k] + f[6 + k] * f[6 + k];
        axis[k] = 2.0 * c.alpha[k] * (ckk - 1.0);
    }
    for (int i = 0; i < 3; ++i)
        for (int jj = 0; jj < 3; ++jj) {
            const int id = 3 * i + jj;
            p[id] = c.mu * f[id] + c.lambda * (j - 1.0) * cof[id] + axis[jj] * f[id];
            if (c.corrected) p[id] -= c.mu * cof[id] / j;
        }
}

// d2psi/dF2 as a 9x9 (row/col index 3i+j), symmetric
inline void stress_hessian(const double* f, const ElasticConstants& c, double* h) {
    double cof[9];
    detail::cof3(f, cof);
    const double j = detail::det3(f);
    double ckk[3];
    for (int k = 0; k < 3; ++k)
        ckk[k] = f[k] * f[k] + f[3 + k] * f[3 + k] + f[6 + k] * f[6 + k];
    for (int i = 0; i < 3; ++i)
        for (int jj = 0; jj < 3; ++jj)
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q) {
                    const int row = 3 * i + jj, col = 3 * p + q;
                    const double kh = detail::det_hess(f, i, jj, p, q);
                    double v = c.lambda * (cof[row] * cof[col] + (j - 1.0) * kh);
                    if (i == p && jj == q) v += c.mu;
                    if (jj == q) {
                        v += 2.0 * c.alpha[jj] * (ckk[jj] - 1.0) * (i == p ? 1.0 : 0.0) +
                             4.0 * c.alpha[jj] * f[row] * f[3 * p + q];
                    }
                    if (c.corrected)
                        v += c.mu * (cof[row] * cof[col] / (j * j) - kh / j);
                    h[9 * row + col] = v;
                }
}

// ---------------------------------------------------------------------------
// Taped batch path for training. Stiffness e is [N,4]; Poisson ratio is one
// global constant, so each Lame coefficient is a plain linear map of e.
// ---------------------------------------------------------------------------

inline ad::Tensor energy_density(const ad::Tensor& f, const ad::Tensor& e, double nu,
                                 bool corrected) {
    check_contract(f.ndim() == 3 && f.dim(1) == 3 && f.dim(2) == 3,
                   "energy_density: expects F [N,3,3]");
    const std::int64_t n = f.dim(0);
    check_contract(e.ndim() == 2 && e.dim(0) == n && e.dim(1) == 4,
                   "energy_density: expects stiffness [N,4]");
    check_contract(nu > -1.0 && nu < 0.5, "energy_density: Poisson ratio out of range");

    ad::Tensor mu = ad::scale(ad::reshape(ad::slice_cols(e, 0, 1), {n}), 1.0 / (2.0 * (1.0 + nu)));
    ad::Tensor lambda = ad::scale(ad::reshape(ad::slice_cols(e, 0, 1), {n}),
                                  nu / ((1.0 + nu) * (1.0 - 2.0 * nu)));
    ad::Tensor alpha = ad::scale(ad::slice_cols(e, 1, 4), 1.0 / (2.0 * (1.0 + nu)));

    ad::Tensor c = ad::bmm33(ad::btranspose33(f), f);
    ad::Tensor i1 = ad::btrace3(c);
    ad::Tensor jdet = ad::bdet3(f);
    ad::Tensor iso = ad::add(ad::mul(mu, ad::scale(ad::shift(i1, -3.0), 0.5)),
                             ad::mul(lambda, ad::scale(ad::square(ad::shift(jdet, -1.0)), 0.5)));
    ad::Tensor axis = ad::scale(
        ad::sum_rows(ad::mul(alpha, ad::square(ad::shift(ad::bdiag3(c), -1.0)))), 0.5);
    ad::Tensor density = ad::add(iso, axis);
    // The guarded log agrees exactly with log above the floor; physical
    // configurations never get near it. It only matters when training probes a
    // perturbed transform that inverts F somewhere, where the linear extension
    // turns a would-be NaN into a steep finite penalty pushing back out.
    if (corrected) density = ad::sub(density, ad::mul(mu, ad::guarded_log(jdet, 1e-6)));
    return density;
}

// Volume-weighted total; volumes are per-point constants.
inline ad::Tensor total_energy(const ad::Tensor& density, const ad::Tensor& volumes) {
    check_contract(density.numel() == volumes.numel(), "total_energy: size mismatch");
    return ad::sum(ad::mul(density, volumes));
}

}  // namespace anisim::energy
