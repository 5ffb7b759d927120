#pragma once

// Adam with bias correction. The epsilon sits outside the square root
// (p -= lr * mhat / (sqrt(vhat) + eps)), matching the reference update the
// golden optimizer test pins down.

#include <cmath>
#include <map>
#include <string>

#include "anisim/ad/param_store.hpp"
#include "anisim/ad/tensor.hpp"

namespace anisim::ad {

// Scales all gradients by max_norm/norm when the global l2 norm exceeds
// max_norm. Returns the pre-clip norm.
inline double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        const double* p = g.data();
        for (std::int64_t i = 0; i < g.numel(); ++i) sq += p[i] * p[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads) {
            Tensor scaled(g.shape());
            for (std::int64_t i = 0; i < g.numel(); ++i) scaled.data()[i] = g.data()[i] * s;
            g = std::move(scaled);
        }
    }
    return norm;
}

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Updates exactly the parameters named in grads; moment buffers are
    // created lazily on first sight. One shared step count per optimizer, so
    // keep separately-scheduled parameter groups in separate Adam instances.
    void step(ParamStore& store, const std::map<std::string, Tensor>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (const auto& [name, g] : grads) {
            const Tensor& p = store.get(name);
            check_contract(p.same_shape(g), "Adam: gradient shape mismatch for '" + name + "'");
            Tensor& m = buffer(m_, name, p.shape());
            Tensor& v = buffer(v_, name, p.shape());
            Tensor next(p.shape());
            for (std::int64_t i = 0; i < p.numel(); ++i) {
                const double gi = g.data()[i];
                m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gi;
                v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gi * gi;
                const double mhat = m.data()[i] / bc1;
                const double vhat = v.data()[i] / bc2;
                next.data()[i] = p.data()[i] - lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            store.set(name, std::move(next));
        }
    }

    std::int64_t steps() const { return t_; }
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    static Tensor& buffer(std::map<std::string, Tensor>& slot, const std::string& name,
                          const Shape& shape) {
        auto it = slot.find(name);
        if (it == slot.end()) it = slot.emplace(name, Tensor(shape)).first;
        return it->second;
    }

    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace anisim::ad
