#pragma once

// Differentiable primitives over Tensor. Every op computes its forward value
// eagerly, rejects non-finite outputs, and (when any input is taped) records a
// node whose backward closure returns dL/d(input) for each input. Gradients of
// every primitive are validated against central finite differences in the test
// suite, so treat the closures here as load-bearing math, not plumbing.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

#include "anisim/ad/tape.hpp"
#include "anisim/ad/tensor.hpp"

namespace anisim::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace detail {

inline Tape* tape_of(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->taped()) continue;
        check_contract(tape == nullptr || tape == t->tape(),
                       "op inputs recorded on different tapes");
        tape = t->tape();
    }
    return tape;
}

inline Tensor finish(const char* op, Tensor result, std::initializer_list<const Tensor*> inputs,
                     Tape::BackwardFn fn) {
    check_all_finite(op, result);
    Tape* tape = tape_of(inputs);
    if (tape == nullptr || !tape->recording()) return result;
    return tape->record(op, std::move(result), std::vector<const Tensor*>(inputs), std::move(fn));
}

// Broadcast layout for elementwise binaries: identical shapes, scalar against
// anything, or a small operand whose shape is a trailing suffix of the large
// one (replicated over the leading dims).
struct Bcast {
    std::int64_t outer = 1;   // replication count of the small operand
    std::int64_t inner = 1;   // numel of the small operand
    bool a_small = false;
    bool b_small = false;
};

inline bool is_suffix(const Shape& small, const Shape& large) {
    if (small.size() > large.size()) return false;
    return std::equal(small.rbegin(), small.rend(), large.rbegin());
}

inline Bcast bcast_plan(const char* op, const Tensor& a, const Tensor& b) {
    Bcast p;
    if (a.same_shape(b)) {
        p.inner = a.numel();
        return p;
    }
    if (b.numel() == 1 || is_suffix(b.shape(), a.shape())) {
        p.b_small = true;
        p.inner = std::max<std::int64_t>(b.numel(), 1);
        p.outer = a.numel() / p.inner;
        check_contract(p.outer * p.inner == a.numel(), std::string(op) + ": broadcast mismatch");
        return p;
    }
    if (a.numel() == 1 || is_suffix(a.shape(), b.shape())) {
        p.a_small = true;
        p.inner = std::max<std::int64_t>(a.numel(), 1);
        p.outer = b.numel() / p.inner;
        check_contract(p.outer * p.inner == b.numel(), std::string(op) + ": broadcast mismatch");
        return p;
    }
    throw ContractViolation(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                            shape_str(b.shape()) + " are not broadcastable");
}

// F(a,b) elementwise with dfa/dfb the partials at each element pair.
template <class F, class Dfa, class Dfb>
Tensor binary_ew(const char* op, const Tensor& a, const Tensor& b, F f, Dfa dfa, Dfb dfb) {
    const Bcast p = bcast_plan(op, a, b);
    const Shape& out_shape = p.a_small ? b.shape() : a.shape();
    Tensor out(out_shape);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t o = 0; o < p.outer; ++o) {
        for (std::int64_t i = 0; i < p.inner; ++i) {
            const std::int64_t flat = o * p.inner + i;
            const double av = pa[p.a_small ? i : flat];
            const double bv = pb[p.b_small ? i : flat];
            po[flat] = f(av, bv);
        }
    }
    return finish(op, std::move(out), {&a, &b}, [=](const Tensor& g) -> std::vector<Tensor> {
        Tensor ga(a.shape()), gb(b.shape());
        const double* pg = g.data();
        double* pga = ga.data();
        double* pgb = gb.data();
        const double* va = a.data();
        const double* vb = b.data();
        for (std::int64_t o = 0; o < p.outer; ++o) {
            for (std::int64_t i = 0; i < p.inner; ++i) {
                const std::int64_t flat = o * p.inner + i;
                const std::int64_t ia = p.a_small ? i : flat;
                const std::int64_t ib = p.b_small ? i : flat;
                const double gv = pg[flat];
                pga[ia] += gv * dfa(va[ia], vb[ib]);
                pgb[ib] += gv * dfb(va[ia], vb[ib]);
            }
        }
        return {std::move(ga), std::move(gb)};
    });
}

template <class F, class Df>
Tensor unary_ew(const char* op, const Tensor& x, F f, Df df) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
    return finish(op, std::move(out), {&x}, [=](const Tensor& g) -> std::vector<Tensor> {
        Tensor gx(x.shape());
        const double* pg = g.data();
        const double* vx = x.data();
        double* pgx = gx.data();
        for (std::int64_t i = 0; i < n; ++i) pgx[i] = pg[i] * df(vx[i]);
        return {std::move(gx)};
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor divide(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// x * c for a plain constant.
inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_ew(
        "scale", x, [c](double v) { return c * v; }, [c](double) { return c; });
}

// x + c for a plain constant.
inline Tensor shift(const Tensor& x, double c) {
    return detail::unary_ew(
        "shift", x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

inline Tensor square(const Tensor& x) {
    return detail::unary_ew(
        "square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

inline Tensor sqrt(const Tensor& x) {
    return detail::unary_ew(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double v) { return 0.5 / std::sqrt(v); });
}

inline Tensor exp(const Tensor& x) {
    return detail::unary_ew(
        "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

inline Tensor log(const Tensor& x) {
    return detail::unary_ew(
        "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

inline Tensor reciprocal(const Tensor& x) {
    return detail::unary_ew(
        "reciprocal", x, [](double v) { return 1.0 / v; },
        [](double v) { return -1.0 / (v * v); });
}

// 1/x clamped to 1/floor when x < floor; clamped entries get zero gradient.
inline Tensor guarded_reciprocal(const Tensor& x, double floor) {
    check_contract(floor > 0.0, "guarded_reciprocal: floor must be positive");
    return detail::unary_ew(
        "guarded_reciprocal", x, [floor](double v) { return v < floor ? 1.0 / floor : 1.0 / v; },
        [floor](double v) { return v < floor ? 0.0 : -1.0 / (v * v); });
}

// log(x) for x >= floor, extended linearly below so the value stays finite
// for any input (including inversions of a determinant) while still falling
// off steeply. The extension matches value and slope at the floor.
inline Tensor guarded_log(const Tensor& x, double floor) {
    check_contract(floor > 0.0, "guarded_log: floor must be positive");
    const double lf = std::log(floor);
    return detail::unary_ew(
        "guarded_log", x,
        [floor, lf](double v) { return v < floor ? lf + (v - floor) / floor : std::log(v); },
        [floor](double v) { return v < floor ? 1.0 / floor : 1.0 / v; });
}

inline Tensor elu(const Tensor& x) {
    return detail::unary_ew(
        "elu", x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
        [](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

inline Tensor softplus(const Tensor& x) {
    return detail::unary_ew(
        "softplus", x,
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline Tensor stop_gradient(const Tensor& x) { return x.detached(); }

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    check_contract(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
                   "matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    MapMat(out.data(), m, n).noalias() = CMapMat(a.data(), m, k) * CMapMat(b.data(), k, n);
    return detail::finish("matmul", std::move(out), {&a, &b},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor ga({m, k}), gb({k, n});
                              CMapMat mg(g.data(), m, n);
                              MapMat(ga.data(), m, k).noalias() =
                                  mg * CMapMat(b.data(), k, n).transpose();
                              MapMat(gb.data(), k, n).noalias() =
                                  CMapMat(a.data(), m, k).transpose() * mg;
                              return {std::move(ga), std::move(gb)};
                          });
}

inline Tensor transpose(const Tensor& a) {
    check_contract(a.ndim() == 2, "transpose: expects rank 2");
    const std::int64_t r = a.dim(0), c = a.dim(1);
    Tensor out({c, r});
    MapMat(out.data(), c, r) = CMapMat(a.data(), r, c).transpose();
    return detail::finish("transpose", std::move(out), {&a},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor ga({r, c});
                              MapMat(ga.data(), r, c) = CMapMat(g.data(), c, r).transpose();
                              return {std::move(ga)};
                          });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    const double* p = x.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) s += p[i];
    return detail::finish("sum", Tensor::scalar(s), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              return {Tensor::full(x.shape(), g.value())};
                          });
}

inline Tensor mean(const Tensor& x) {
    check_contract(x.numel() > 0, "mean: empty tensor");
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    const double* p = x.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) s += p[i];
    return detail::finish("mean", Tensor::scalar(s * inv), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              return {Tensor::full(x.shape(), g.value() * inv)};
                          });
}

// Row sums of a 2-d tensor: [R,C] -> [R].
inline Tensor sum_rows(const Tensor& x) {
    check_contract(x.ndim() == 2, "sum_rows: expects rank 2");
    const std::int64_t r = x.dim(0), c = x.dim(1);
    Tensor out({r});
    for (std::int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < c; ++j) s += x.data()[i * c + j];
        out.data()[i] = s;
    }
    return detail::finish("sum_rows", std::move(out), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor gx({r, c});
                              for (std::int64_t i = 0; i < r; ++i)
                                  for (std::int64_t j = 0; j < c; ++j)
                                      gx.data()[i * c + j] = g.data()[i];
                              return {std::move(gx)};
                          });
}

// Row maxima of a 2-d tensor, returned as a constant (never taped). Intended
// for the stabilizing shift in softmax, where the shift cancels analytically.
inline Tensor row_max_detached(const Tensor& x) {
    check_contract(x.ndim() == 2, "row_max: expects rank 2");
    const std::int64_t r = x.dim(0), c = x.dim(1);
    check_contract(c > 0, "row_max: empty rows");
    Tensor out({r});
    for (std::int64_t i = 0; i < r; ++i) {
        double m = x.data()[i * c];
        for (std::int64_t j = 1; j < c; ++j) m = std::max(m, x.data()[i * c + j]);
        out.data()[i] = m;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Row-broadcast binaries: X is [R,C], s is [R]
// ---------------------------------------------------------------------------

namespace detail {
template <class F, class DfX, class DfS>
Tensor rows_ew(const char* op, const Tensor& x, const Tensor& s, F f, DfX dfx, DfS dfs) {
    check_contract(x.ndim() == 2 && s.numel() == x.dim(0),
                   std::string(op) + ": expects [R,C] and [R]");
    const std::int64_t r = x.dim(0), c = x.dim(1);
    Tensor out({r, c});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j)
            out.data()[i * c + j] = f(x.data()[i * c + j], s.data()[i]);
    return finish(op, std::move(out), {&x, &s}, [=](const Tensor& g) -> std::vector<Tensor> {
        Tensor gx({r, c});
        Tensor gs(s.shape());
        for (std::int64_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < c; ++j) {
                const double xv = x.data()[i * c + j];
                const double sv = s.data()[i];
                const double gv = g.data()[i * c + j];
                gx.data()[i * c + j] = gv * dfx(xv, sv);
                acc += gv * dfs(xv, sv);
            }
            gs.data()[i] = acc;
        }
        return {std::move(gx), std::move(gs)};
    });
}
}  // namespace detail

inline Tensor mul_rows(const Tensor& x, const Tensor& s) {
    return detail::rows_ew(
        "mul_rows", x, s, [](double xv, double sv) { return xv * sv; },
        [](double, double sv) { return sv; }, [](double xv, double) { return xv; });
}

inline Tensor div_rows(const Tensor& x, const Tensor& s) {
    return detail::rows_ew(
        "div_rows", x, s, [](double xv, double sv) { return xv / sv; },
        [](double, double sv) { return 1.0 / sv; },
        [](double xv, double sv) { return -xv / (sv * sv); });
}

inline Tensor sub_rows(const Tensor& x, const Tensor& s) {
    return detail::rows_ew(
        "sub_rows", x, s, [](double xv, double sv) { return xv - sv; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

// Numerically stable row softmax, composed from primitives. The max shift is
// detached, which leaves the exact gradient untouched.
inline Tensor softmax_rows(const Tensor& x) {
    Tensor e = exp(sub_rows(x, row_max_detached(x)));
    return div_rows(e, sum_rows(e));
}

// ---------------------------------------------------------------------------
// Structure: reshape / slice / concat / gather
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    check_contract(shape_numel(shape) == x.numel(),
                   "reshape: numel mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor out(shape, x.vec());
    Shape orig = x.shape();
    return detail::finish("reshape", std::move(out), {&x},
                          [orig](const Tensor& g) -> std::vector<Tensor> {
                              return {Tensor(orig, g.vec())};
                          });
}

// Contiguous block along the leading axis: rows [r0, r1) of any-rank tensor.
inline Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1) {
    check_contract(x.ndim() >= 1 && 0 <= r0 && r0 < r1 && r1 <= x.dim(0),
                   "slice_rows: bad range");
    const std::int64_t inner = x.numel() / x.dim(0);
    Shape out_shape = x.shape();
    out_shape[0] = r1 - r0;
    Tensor out(out_shape);
    std::memcpy(out.data(), x.data() + r0 * inner,
                static_cast<std::size_t>((r1 - r0) * inner) * sizeof(double));
    return detail::finish("slice_rows", std::move(out), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor gx(x.shape());
                              std::memcpy(gx.data() + r0 * inner, g.data(),
                                          static_cast<std::size_t>((r1 - r0) * inner) *
                                              sizeof(double));
                              return {std::move(gx)};
                          });
}

inline Tensor slice_cols(const Tensor& x, std::int64_t c0, std::int64_t c1) {
    check_contract(x.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= x.dim(1),
                   "slice_cols: bad range");
    const std::int64_t r = x.dim(0), c = x.dim(1), w = c1 - c0;
    Tensor out({r, w});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < w; ++j) out.data()[i * w + j] = x.data()[i * c + c0 + j];
    return detail::finish("slice_cols", std::move(out), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor gx({r, c});
                              for (std::int64_t i = 0; i < r; ++i)
                                  for (std::int64_t j = 0; j < w; ++j)
                                      gx.data()[i * c + c0 + j] = g.data()[i * w + j];
                              return {std::move(gx)};
                          });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    check_contract(!parts.empty(), "concat_cols: empty input");
    const std::int64_t r = parts[0].dim(0);
    std::int64_t total = 0;
    for (const Tensor& p : parts) {
        check_contract(p.ndim() == 2 && p.dim(0) == r, "concat_cols: row mismatch");
        total += p.dim(1);
    }
    Tensor out({r, total});
    std::int64_t off = 0;
    for (const Tensor& p : parts) {
        const std::int64_t c = p.dim(1);
        for (std::int64_t i = 0; i < r; ++i)
            std::memcpy(out.data() + i * total + off, p.data() + i * c,
                        static_cast<std::size_t>(c) * sizeof(double));
        off += c;
    }
    std::vector<const Tensor*> in_ptrs;
    std::vector<Tensor> captured = parts;
    for (const Tensor& p : captured) in_ptrs.push_back(&p);
    check_all_finite("concat_cols", out);
    Tape* tape = detail::tape_of({});
    for (const Tensor& p : parts) {
        if (p.taped()) {
            check_contract(tape == nullptr || tape == p.tape(),
                           "concat_cols: inputs on different tapes");
            tape = p.tape();
        }
    }
    if (tape == nullptr || !tape->recording()) return out;
    std::vector<Shape> shapes;
    for (const Tensor& p : parts) shapes.push_back(p.shape());
    return tape->record("concat_cols", std::move(out), in_ptrs,
                        [=](const Tensor& g) -> std::vector<Tensor> {
                            std::vector<Tensor> grads;
                            std::int64_t o = 0;
                            for (const Shape& s : shapes) {
                                const std::int64_t c = s[1];
                                Tensor gp(s);
                                for (std::int64_t i = 0; i < r; ++i)
                                    std::memcpy(gp.data() + i * c, g.data() + i * total + o,
                                                static_cast<std::size_t>(c) * sizeof(double));
                                grads.push_back(std::move(gp));
                                o += c;
                            }
                            return grads;
                        });
}

// out[m,:] = x[idx[m],:]; backward scatter-adds into the source rows.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx) {
    check_contract(x.ndim() == 2, "gather_rows: expects rank 2");
    const std::int64_t r = x.dim(0), c = x.dim(1);
    const std::int64_t m = static_cast<std::int64_t>(idx.size());
    Tensor out({m, c});
    for (std::int64_t i = 0; i < m; ++i) {
        check_contract(0 <= idx[i] && idx[i] < r, "gather_rows: index out of range");
        std::memcpy(out.data() + i * c, x.data() + idx[i] * c,
                    static_cast<std::size_t>(c) * sizeof(double));
    }
    return detail::finish("gather_rows", std::move(out), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor gx({r, c});
                              for (std::int64_t i = 0; i < m; ++i)
                                  for (std::int64_t j = 0; j < c; ++j)
                                      gx.data()[idx[i] * c + j] += g.data()[i * c + j];
                              return {std::move(gx)};
                          });
}

// ---------------------------------------------------------------------------
// Batched 3x3 kernels (leading batch axis)
// ---------------------------------------------------------------------------

namespace detail {
inline void check_b33(const char* op, const Tensor& t) {
    check_contract(t.ndim() == 3 && t.dim(1) == 3 && t.dim(2) == 3,
                   std::string(op) + ": expects [B,3,3], got " + shape_str(t.shape()));
}

inline void cof3(const double* a, double* c) {
    c[0] = a[4] * a[8] - a[5] * a[7];
    c[1] = -(a[3] * a[8] - a[5] * a[6]);
    c[2] = a[3] * a[7] - a[4] * a[6];
    c[3] = -(a[1] * a[8] - a[2] * a[7]);
    c[4] = a[0] * a[8] - a[2] * a[6];
    c[5] = -(a[0] * a[7] - a[1] * a[6]);
    c[6] = a[1] * a[5] - a[2] * a[4];
    c[7] = -(a[0] * a[5] - a[2] * a[3]);
    c[8] = a[0] * a[4] - a[1] * a[3];
}
}  // namespace detail

inline Tensor bmm33(const Tensor& a, const Tensor& b) {
    detail::check_b33("bmm33", a);
    detail::check_b33("bmm33", b);
    check_contract(a.dim(0) == b.dim(0), "bmm33: batch mismatch");
    const std::int64_t n = a.dim(0);
    Tensor out({n, 3, 3});
    for (std::int64_t bi = 0; bi < n; ++bi) {
        const double* pa = a.data() + 9 * bi;
        const double* pb = b.data() + 9 * bi;
        double* po = out.data() + 9 * bi;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                po[3 * i + j] = pa[3 * i] * pb[j] + pa[3 * i + 1] * pb[3 + j] +
                                pa[3 * i + 2] * pb[6 + j];
    }
    return detail::finish("bmm33", std::move(out), {&a, &b},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor ga({n, 3, 3}), gb({n, 3, 3});
                              for (std::int64_t bi = 0; bi < n; ++bi) {
                                  const double* pa = a.data() + 9 * bi;
                                  const double* pb = b.data() + 9 * bi;
                                  const double* pg = g.data() + 9 * bi;
                                  double* pga = ga.data() + 9 * bi;
                                  double* pgb = gb.data() + 9 * bi;
                                  for (int i = 0; i < 3; ++i)
                                      for (int j = 0; j < 3; ++j) {
                                          // dA = G B^T, dB = A^T G
                                          pga[3 * i + j] = pg[3 * i] * pb[3 * j] +
                                                           pg[3 * i + 1] * pb[3 * j + 1] +
                                                           pg[3 * i + 2] * pb[3 * j + 2];
                                          pgb[3 * i + j] = pa[i] * pg[j] +
                                                           pa[3 + i] * pg[3 + j] +
                                                           pa[6 + i] * pg[6 + j];
                                      }
                              }
                              return {std::move(ga), std::move(gb)};
                          });
}

inline Tensor btranspose33(const Tensor& a) {
    detail::check_b33("btranspose33", a);
    const std::int64_t n = a.dim(0);
    Tensor out({n, 3, 3});
    for (std::int64_t bi = 0; bi < n; ++bi)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                out.data()[9 * bi + 3 * i + j] = a.data()[9 * bi + 3 * j + i];
    return detail::finish("btranspose33", std::move(out), {&a},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor ga({n, 3, 3});
                              for (std::int64_t bi = 0; bi < n; ++bi)
                                  for (int i = 0; i < 3; ++i)
                                      for (int j = 0; j < 3; ++j)
                                          ga.data()[9 * bi + 3 * i + j] =
                                              g.data()[9 * bi + 3 * j + i];
                              return {std::move(ga)};
                          });
}

inline Tensor btrace3(const Tensor& a) {
    detail::check_b33("btrace3", a);
    const std::int64_t n = a.dim(0);
    Tensor out({n});
    for (std::int64_t bi = 0; bi < n; ++bi) {
        const double* p = a.data() + 9 * bi;
        out.data()[bi] = p[0] + p[4] + p[8];
    }
    return detail::finish("btrace3", std::move(out), {&a},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor ga({n, 3, 3});
                              for (std::int64_t bi = 0; bi < n; ++bi) {
                                  ga.data()[9 * bi + 0] = g.data()[bi];
                                  ga.data()[9 * bi + 4] = g.data()[bi];
                                  ga.data()[9 * bi + 8] = g.data()[bi];
                              }
                              return {std::move(ga)};
                          });
}

inline Tensor bdet3(const Tensor& a) {
    detail::check_b33("bdet3", a);
    const std::int64_t n = a.dim(0);
    Tensor out({n});
    for (std::int64_t bi = 0; bi < n; ++bi) {
        const double* p = a.data() + 9 * bi;
        out.data()[bi] = p[0] * (p[4] * p[8] - p[5] * p[7]) -
                         p[1] * (p[3] * p[8] - p[5] * p[6]) +
                         p[2] * (p[3] * p[7] - p[4] * p[6]);
    }
    return detail::finish("bdet3", std::move(out), {&a},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              // d det / dA = cofactor(A)
                              Tensor ga({n, 3, 3});
                              double c[9];
                              for (std::int64_t bi = 0; bi < n; ++bi) {
                                  detail::cof3(a.data() + 9 * bi, c);
                                  for (int k = 0; k < 9; ++k)
                                      ga.data()[9 * bi + k] = g.data()[bi] * c[k];
                              }
                              return {std::move(ga)};
                          });
}

inline Tensor bdiag3(const Tensor& a) {
    detail::check_b33("bdiag3", a);
    const std::int64_t n = a.dim(0);
    Tensor out({n, 3});
    for (std::int64_t bi = 0; bi < n; ++bi)
        for (int k = 0; k < 3; ++k) out.data()[3 * bi + k] = a.data()[9 * bi + 4 * k];
    return detail::finish("bdiag3", std::move(out), {&a},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor ga({n, 3, 3});
                              for (std::int64_t bi = 0; bi < n; ++bi)
                                  for (int k = 0; k < 3; ++k)
                                      ga.data()[9 * bi + 4 * k] = g.data()[3 * bi + k];
                              return {std::move(ga)};
                          });
}

// ---------------------------------------------------------------------------
// Quaternions. Layout per row: (w, x, y, z).
// ---------------------------------------------------------------------------

inline Tensor quat_normalize(const Tensor& q) {
    check_contract(q.ndim() == 2 && q.dim(1) == 4, "quat_normalize: expects [B,4]");
    const std::int64_t n = q.dim(0);
    Tensor out({n, 4});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* p = q.data() + 4 * i;
        const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]);
        for (int k = 0; k < 4; ++k) out.data()[4 * i + k] = p[k] / norm;
    }
    return detail::finish(
        "quat_normalize", std::move(out), {&q}, [=](const Tensor& g) -> std::vector<Tensor> {
            // d(q/|q|)/dq = (I - qhat qhat^T) / |q|
            Tensor gq({n, 4});
            for (std::int64_t i = 0; i < n; ++i) {
                const double* p = q.data() + 4 * i;
                const double* pg = g.data() + 4 * i;
                const double norm =
                    std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]);
                double qh[4], dot = 0.0;
                for (int k = 0; k < 4; ++k) {
                    qh[k] = p[k] / norm;
                    dot += qh[k] * pg[k];
                }
                for (int k = 0; k < 4; ++k) gq.data()[4 * i + k] = (pg[k] - qh[k] * dot) / norm;
            }
            return {std::move(gq)};
        });
}

namespace detail {
// R as the standard quadratic map of (w,x,y,z); a rotation matrix iff the row
// is unit length, so feed it from quat_normalize.
inline void quat_rot(const double* q, double* r) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    r[0] = 1.0 - 2.0 * (y * y + z * z);
    r[1] = 2.0 * (x * y - w * z);
    r[2] = 2.0 * (x * z + w * y);
    r[3] = 2.0 * (x * y + w * z);
    r[4] = 1.0 - 2.0 * (x * x + z * z);
    r[5] = 2.0 * (y * z - w * x);
    r[6] = 2.0 * (x * z - w * y);
    r[7] = 2.0 * (y * z + w * x);
    r[8] = 1.0 - 2.0 * (x * x + y * y);
}

// dR/dq contracted with a 3x3 cotangent: out[k] = <G, dR/dq_k>.
inline void quat_rot_pullback(const double* q, const double* gmat, double* gq) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    const double g00 = gmat[0], g01 = gmat[1], g02 = gmat[2];
    const double g10 = gmat[3], g11 = gmat[4], g12 = gmat[5];
    const double g20 = gmat[6], g21 = gmat[7], g22 = gmat[8];
    gq[0] = 2.0 * (-z * g01 + y * g02 + z * g10 - x * g12 - y * g20 + x * g21);
    gq[1] = 2.0 * (y * g01 + z * g02 + y * g10 - 2.0 * x * g11 - w * g12 + z * g20 + w * g21 -
                   2.0 * x * g22);
    gq[2] = 2.0 * (-2.0 * y * g00 + x * g01 + w * g02 + x * g10 + z * g12 - w * g20 + z * g21 -
                   2.0 * y * g22);
    gq[3] = 2.0 * (-2.0 * z * g00 - w * g01 + x * g02 + w * g10 - 2.0 * z * g11 + y * g12 +
                   x * g20 + y * g21);
}
}  // namespace detail

inline Tensor quat_to_rotmat(const Tensor& q) {
    check_contract(q.ndim() == 2 && q.dim(1) == 4, "quat_to_rotmat: expects [B,4]");
    const std::int64_t n = q.dim(0);
    Tensor out({n, 3, 3});
    for (std::int64_t i = 0; i < n; ++i) detail::quat_rot(q.data() + 4 * i, out.data() + 9 * i);
    return detail::finish("quat_to_rotmat", std::move(out), {&q},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor gq({n, 4});
                              for (std::int64_t i = 0; i < n; ++i)
                                  detail::quat_rot_pullback(q.data() + 4 * i, g.data() + 9 * i,
                                                            gq.data() + 4 * i);
                              return {std::move(gq)};
                          });
}

// ---------------------------------------------------------------------------
// Handle blends. x_rest is a constant by contract (spatial derivatives w.r.t.
// rest positions are the job of the least-squares gradient field, not the tape).
// ---------------------------------------------------------------------------

// y_i = sum_j w_ij (R_j x_i + t_j);  w:[N,J], R:[J,3,3], t:[J,3], x:[N,3] const.
inline Tensor blend_apply(const Tensor& w, const Tensor& r, const Tensor& t, const Tensor& x) {
    check_contract(w.ndim() == 2 && x.ndim() == 2 && x.dim(1) == 3 && w.dim(0) == x.dim(0),
                   "blend_apply: expects w [N,J], x [N,3]");
    detail::check_b33("blend_apply", r);
    const std::int64_t n = w.dim(0), j = w.dim(1);
    check_contract(r.dim(0) == j && t.ndim() == 2 && t.dim(0) == j && t.dim(1) == 3,
                   "blend_apply: handle count mismatch");
    check_contract(!x.taped(), "blend_apply: rest positions must be constant");
    Tensor out({n, 3});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = x.data() + 3 * i;
        double* yi = out.data() + 3 * i;
        for (std::int64_t h = 0; h < j; ++h) {
            const double wij = w.data()[i * j + h];
            const double* rj = r.data() + 9 * h;
            const double* tj = t.data() + 3 * h;
            for (int a = 0; a < 3; ++a)
                yi[a] += wij * (rj[3 * a] * xi[0] + rj[3 * a + 1] * xi[1] + rj[3 * a + 2] * xi[2] +
                                tj[a]);
        }
    }
    return detail::finish(
        "blend_apply", std::move(out), {&w, &r, &t, &x},
        [=](const Tensor& g) -> std::vector<Tensor> {
            Tensor gw({n, j}), gr({j, 3, 3}), gt({j, 3});
            for (std::int64_t i = 0; i < n; ++i) {
                const double* xi = x.data() + 3 * i;
                const double* gi = g.data() + 3 * i;
                for (std::int64_t h = 0; h < j; ++h) {
                    const double wij = w.data()[i * j + h];
                    const double* rj = r.data() + 9 * h;
                    const double* tj = t.data() + 3 * h;
                    double dw = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double ua = rj[3 * a] * xi[0] + rj[3 * a + 1] * xi[1] +
                                          rj[3 * a + 2] * xi[2] + tj[a];
                        dw += ua * gi[a];
                        gt.data()[3 * h + a] += wij * gi[a];
                        for (int b = 0; b < 3; ++b)
                            gr.data()[9 * h + 3 * a + b] += wij * gi[a] * xi[b];
                    }
                    gw.data()[i * j + h] = dw;
                }
            }
            return {std::move(gw), std::move(gr), std::move(gt), Tensor()};
        });
}

// F_i = sum_j [ w_ij R_j + (R_j x_i + t_j) g_ij^T ];  adds g:[N,J,3].
inline Tensor blend_gradient(const Tensor& w, const Tensor& wg, const Tensor& r, const Tensor& t,
                             const Tensor& x) {
    const std::int64_t n = w.dim(0), j = w.dim(1);
    check_contract(wg.ndim() == 3 && wg.dim(0) == n && wg.dim(1) == j && wg.dim(2) == 3,
                   "blend_gradient: expects weight gradients [N,J,3]");
    detail::check_b33("blend_gradient", r);
    check_contract(r.dim(0) == j && t.dim(0) == j, "blend_gradient: handle count mismatch");
    check_contract(!x.taped(), "blend_gradient: rest positions must be constant");
    Tensor out({n, 3, 3});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = x.data() + 3 * i;
        double* fi = out.data() + 9 * i;
        for (std::int64_t h = 0; h < j; ++h) {
            const double wij = w.data()[i * j + h];
            const double* rj = r.data() + 9 * h;
            const double* tj = t.data() + 3 * h;
            const double* gij = wg.data() + (i * j + h) * 3;
            for (int a = 0; a < 3; ++a) {
                const double ua = rj[3 * a] * xi[0] + rj[3 * a + 1] * xi[1] +
                                  rj[3 * a + 2] * xi[2] + tj[a];
                for (int b = 0; b < 3; ++b) fi[3 * a + b] += wij * rj[3 * a + b] + ua * gij[b];
            }
        }
    }
    return detail::finish(
        "blend_gradient", std::move(out), {&w, &wg, &r, &t, &x},
        [=](const Tensor& g) -> std::vector<Tensor> {
            Tensor dw({n, j}), dg({n, j, 3}), dr({j, 3, 3}), dt({j, 3});
            for (std::int64_t i = 0; i < n; ++i) {
                const double* xi = x.data() + 3 * i;
                const double* gi = g.data() + 9 * i;  // dL/dF_i, row-major
                for (std::int64_t h = 0; h < j; ++h) {
                    const double wij = w.data()[i * j + h];
                    const double* rj = r.data() + 9 * h;
                    const double* tj = t.data() + 3 * h;
                    const double* gij = wg.data() + (i * j + h) * 3;
                    double dwij = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double ua = rj[3 * a] * xi[0] + rj[3 * a + 1] * xi[1] +
                                          rj[3 * a + 2] * xi[2] + tj[a];
                        // (G g_ij)_a drives both u and t pullbacks
                        const double gg = gi[3 * a] * gij[0] + gi[3 * a + 1] * gij[1] +
                                          gi[3 * a + 2] * gij[2];
                        dt.data()[3 * h + a] += gg;
                        for (int b = 0; b < 3; ++b) {
                            dwij += rj[3 * a + b] * gi[3 * a + b];
                            dg.data()[(i * j + h) * 3 + b] += gi[3 * a + b] * ua;
                            dr.data()[9 * h + 3 * a + b] += wij * gi[3 * a + b] + gg * xi[b];
                        }
                    }
                    dw.data()[i * j + h] = dwij;
                }
            }
            return {std::move(dw), std::move(dg), std::move(dr), std::move(dt), Tensor()};
        });
}

// ---------------------------------------------------------------------------
// Neighborhood ops (fixed integer index tables, K columns per row)
// ---------------------------------------------------------------------------

// out[i,:] = mean over neighbors m of x[idx[i*K+m],:].
inline Tensor knn_mean(const Tensor& x, const std::vector<std::int64_t>& idx, std::int64_t k) {
    check_contract(x.ndim() == 2 && k > 0, "knn_mean: expects rank 2 and K > 0");
    const std::int64_t n = x.dim(0), c = x.dim(1);
    check_contract(static_cast<std::int64_t>(idx.size()) == n * k, "knn_mean: index table size");
    Tensor out({n, c});
    const double inv = 1.0 / static_cast<double>(k);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t m = 0; m < k; ++m) {
            const double* src = x.data() + idx[i * k + m] * c;
            for (std::int64_t q = 0; q < c; ++q) out.data()[i * c + q] += inv * src[q];
        }
    return detail::finish("knn_mean", std::move(out), {&x},
                          [=](const Tensor& g) -> std::vector<Tensor> {
                              Tensor gx({n, c});
                              for (std::int64_t i = 0; i < n; ++i)
                                  for (std::int64_t m = 0; m < k; ++m) {
                                      double* dst = gx.data() + idx[i * k + m] * c;
                                      for (std::int64_t q = 0; q < c; ++q)
                                          dst[q] += inv * g.data()[i * c + q];
                                  }
                              return {std::move(gx)};
                          });
}

// s[i,m] = <q_i, k_{idx[i,m]}>.
inline Tensor local_attn_scores(const Tensor& q, const Tensor& k,
                                const std::vector<std::int64_t>& idx, std::int64_t kk) {
    check_contract(q.ndim() == 2 && k.ndim() == 2 && q.dim(1) == k.dim(1) &&
                       q.dim(0) == k.dim(0),
                   "local_attn_scores: expects matching [N,d]");
    const std::int64_t n = q.dim(0), d = q.dim(1);
    check_contract(static_cast<std::int64_t>(idx.size()) == n * kk,
                   "local_attn_scores: index table size");
    Tensor out({n, kk});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t m = 0; m < kk; ++m) {
            const double* qi = q.data() + i * d;
            const double* kj = k.data() + idx[i * kk + m] * d;
            double s = 0.0;
            for (std::int64_t a = 0; a < d; ++a) s += qi[a] * kj[a];
            out.data()[i * kk + m] = s;
        }
    return detail::finish(
        "local_attn_scores", std::move(out), {&q, &k},
        [=](const Tensor& g) -> std::vector<Tensor> {
            Tensor gq({n, d}), gk({n, d});
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t m = 0; m < kk; ++m) {
                    const double gv = g.data()[i * kk + m];
                    const std::int64_t jrow = idx[i * kk + m];
                    for (std::int64_t a = 0; a < d; ++a) {
                        gq.data()[i * d + a] += gv * k.data()[jrow * d + a];
                        gk.data()[jrow * d + a] += gv * q.data()[i * d + a];
                    }
                }
            return {std::move(gq), std::move(gk)};
        });
}

// g[i,j,:] = A_i * (w[idx[i,m],j] - w[i,j])_m, projecting neighbor
// differences of per-handle fields through fixed per-point matrices A:[N,3,K].
// The coefficient tensor is constant by contract; gradients flow to w only.
inline Tensor lsq_gradient(const Tensor& w, const Tensor& coeff,
                           const std::vector<std::int64_t>& idx, std::int64_t k) {
    check_contract(w.ndim() == 2, "lsq_gradient: expects fields [N,J]");
    const std::int64_t n = w.dim(0), j = w.dim(1);
    check_contract(coeff.ndim() == 3 && coeff.dim(0) == n && coeff.dim(1) == 3 &&
                       coeff.dim(2) == k,
                   "lsq_gradient: expects coefficients [N,3,K]");
    check_contract(static_cast<std::int64_t>(idx.size()) == n * k,
                   "lsq_gradient: index table size");
    check_contract(!coeff.taped(), "lsq_gradient: coefficients must be constant");
    Tensor out({n, j, 3});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t h = 0; h < j; ++h) {
            const double wi = w.data()[i * j + h];
            for (int d = 0; d < 3; ++d) {
                double acc = 0.0;
                for (std::int64_t m = 0; m < k; ++m)
                    acc += coeff.data()[(i * 3 + d) * k + m] *
                           (w.data()[idx[i * k + m] * j + h] - wi);
                out.data()[(i * j + h) * 3 + d] = acc;
            }
        }
    return detail::finish(
        "lsq_gradient", std::move(out), {&w, &coeff},
        [=](const Tensor& g) -> std::vector<Tensor> {
            Tensor gw({n, j});
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t h = 0; h < j; ++h)
                    for (int d = 0; d < 3; ++d) {
                        const double gv = g.data()[(i * j + h) * 3 + d];
                        if (gv == 0.0) continue;
                        for (std::int64_t m = 0; m < k; ++m) {
                            const double c = coeff.data()[(i * 3 + d) * k + m];
                            gw.data()[idx[i * k + m] * j + h] += gv * c;
                            gw.data()[i * j + h] -= gv * c;
                        }
                    }
            return {std::move(gw), Tensor()};
        });
}

// o_i = sum_m a[i,m] v_{idx[i,m]}.
inline Tensor local_attn_apply(const Tensor& a, const Tensor& v,
                               const std::vector<std::int64_t>& idx, std::int64_t kk) {
    check_contract(a.ndim() == 2 && a.dim(1) == kk && v.ndim() == 2,
                   "local_attn_apply: expects scores [N,K] and values [N,d]");
    const std::int64_t n = a.dim(0), d = v.dim(1);
    check_contract(static_cast<std::int64_t>(idx.size()) == n * kk,
                   "local_attn_apply: index table size");
    Tensor out({n, d});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t m = 0; m < kk; ++m) {
            const double av = a.data()[i * kk + m];
            const double* vj = v.data() + idx[i * kk + m] * d;
            for (std::int64_t q = 0; q < d; ++q) out.data()[i * d + q] += av * vj[q];
        }
    return detail::finish(
        "local_attn_apply", std::move(out), {&a, &v},
        [=](const Tensor& g) -> std::vector<Tensor> {
            Tensor ga({n, kk}), gv(v.shape());
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t m = 0; m < kk; ++m) {
                    const std::int64_t jrow = idx[i * kk + m];
                    double s = 0.0;
                    for (std::int64_t q = 0; q < d; ++q) {
                        s += g.data()[i * d + q] * v.data()[jrow * d + q];
                        gv.data()[jrow * d + q] += a.data()[i * kk + m] * g.data()[i * d + q];
                    }
                    ga.data()[i * kk + m] = s;
                }
            return {std::move(ga), std::move(gv)};
        });
}

}  // namespace anisim::ad
