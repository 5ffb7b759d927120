#pragma once

// Shared bits for the small networks: parameter initialization and the linear
// layer applied through the tape. Weights are stored input-major ([in, out]),
// so a layer is y = x W + b.

#include <cmath>
#include <map>
#include <string>

#include "anisim/ad/ops.hpp"
#include "anisim/ad/param_store.hpp"
#include "anisim/support/rng.hpp"

namespace anisim::nn {

inline void init_linear(ad::ParamStore& store, const std::string& prefix, std::int64_t in,
                        std::int64_t out, Rng& rng) {
    ad::Tensor w({in, out});
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::int64_t i = 0; i < w.numel(); ++i) w.data()[i] = std_dev * rng.normal();
    store.add(prefix + ".weight", std::move(w));
    store.add(prefix + ".bias", ad::Tensor({out}));
}

inline const ad::Tensor& param(const std::map<std::string, ad::Tensor>& p,
                               const std::string& name) {
    auto it = p.find(name);
    check_contract(it != p.end(), "missing parameter '" + name + "'");
    return it->second;
}

inline ad::Tensor linear(const std::map<std::string, ad::Tensor>& p, const std::string& prefix,
                         const ad::Tensor& x) {
    return ad::add(ad::matmul(x, param(p, prefix + ".weight")), param(p, prefix + ".bias"));
}

}  // namespace anisim::nn
