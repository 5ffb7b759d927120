#pragma once

// The learned skinning field: a coordinate MLP mapping rest position to a
// per-handle weight distribution. Six linear layers with ELU activations in
// between and a row softmax at the end, so weights are positive and sum to
// one at every point by construction.

#include <map>
#include <string>

#include "anisim/ad/ops.hpp"
#include "anisim/ad/param_store.hpp"
#include "anisim/nn/common.hpp"
#include "anisim/support/rng.hpp"

namespace anisim::deform {

struct WeightFieldConfig {
    std::int64_t num_handles = 4;
    std::int64_t hidden_width = 64;
};

inline constexpr int kWeightFieldDepth = 6;

inline void init_weight_field(ad::ParamStore& store, const WeightFieldConfig& cfg, Rng& rng) {
    check_contract(cfg.num_handles >= 1 && cfg.hidden_width >= 1,
                   "weight field: bad configuration");
    std::int64_t in = 3;
    for (int layer = 0; layer < kWeightFieldDepth; ++layer) {
        const std::int64_t out =
            layer + 1 == kWeightFieldDepth ? cfg.num_handles : cfg.hidden_width;
        nn::init_linear(store, "w_net." + std::to_string(layer), in, out, rng);
        in = out;
    }
}

inline ad::Tensor weight_field_logits(const std::map<std::string, ad::Tensor>& p,
                                      const ad::Tensor& x) {
    ad::Tensor h = x;
    for (int layer = 0; layer < kWeightFieldDepth; ++layer) {
        h = nn::linear(p, "w_net." + std::to_string(layer), h);
        if (layer + 1 < kWeightFieldDepth) h = ad::elu(h);
    }
    return h;
}

inline ad::Tensor weight_field(const std::map<std::string, ad::Tensor>& p, const ad::Tensor& x) {
    return ad::softmax_rows(weight_field_logits(p, x));
}

// Soft orthogonality over weight columns: (1/J^2) |W^T W / N - I|_F^2.
// All-equal weights are heavily penalized, one-hot partitions are not.
inline ad::Tensor orthogonality_loss(const ad::Tensor& w) {
    check_contract(w.ndim() == 2, "orthogonality_loss: expects [N,J]");
    const std::int64_t n = w.dim(0), j = w.dim(1);
    ad::Tensor gram = ad::scale(ad::matmul(ad::transpose(w), w), 1.0 / static_cast<double>(n));
    ad::Tensor eye({j, j});
    for (std::int64_t d = 0; d < j; ++d) eye.data()[d * j + d] = 1.0;
    return ad::scale(ad::sum(ad::square(ad::sub(gram, eye))),
                     1.0 / static_cast<double>(j * j));
}

}  // namespace anisim::deform
