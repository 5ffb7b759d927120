#pragma once

// The stiffness network: embeds rest position and the per-point feature row,
// then alternates local cross-attention over the point's neighborhood with
// global attention over an even-stride token subset, plus a feed-forward
// update, all residual and un-normalized. The head is zero-initialized with
// its bias chosen so every point starts at the same baseline stiffness; the
// field only differentiates as training pushes it to.
//
// Output per point: (E_iso, E_x, E_y, E_z), each e_min + softplus(.) * e_scale.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "anisim/ad/ops.hpp"
#include "anisim/ad/param_store.hpp"
#include "anisim/nn/common.hpp"
#include "anisim/support/rng.hpp"

namespace anisim::material {

struct MaterialNetConfig {
    std::int64_t hidden_width = 64;
    std::int64_t num_blocks = 2;
    std::int64_t max_tokens = 512;
    double e_min = 1e-2;
    double e_scale = 1e4;
    double initial_e = 1e3;
};

inline double softplus_inverse(double y) {
    check_contract(y > 0.0, "softplus_inverse: needs y > 0");
    return std::log(std::expm1(y));
}

// Even-stride token rows for global attention; all rows when n fits.
inline std::vector<std::int64_t> token_rows(std::int64_t n, std::int64_t max_tokens) {
    const std::int64_t stride = (n + max_tokens - 1) / max_tokens;
    std::vector<std::int64_t> rows;
    for (std::int64_t i = 0; i < n; i += stride) rows.push_back(i);
    return rows;
}

inline void init_material_net(ad::ParamStore& store, const MaterialNetConfig& cfg,
                              std::int64_t feature_width, Rng& rng) {
    const std::int64_t h = cfg.hidden_width;
    nn::init_linear(store, "e_net.point_embed", 3, h, rng);
    nn::init_linear(store, "e_net.feat_embed", feature_width, h, rng);
    for (std::int64_t b = 0; b < cfg.num_blocks; ++b) {
        const std::string base = "e_net.block" + std::to_string(b);
        for (const char* name : {".lq", ".lk", ".lv", ".gq", ".gk", ".gv", ".ffn1", ".ffn2"})
            nn::init_linear(store, base + name, h, h, rng);
    }
    // zero head weight, bias at the uniform-stiffness baseline
    store.add("e_net.head.weight", ad::Tensor({h, 4}));
    ad::Tensor bias({4});
    const double b0 = softplus_inverse((cfg.initial_e - cfg.e_min) / cfg.e_scale);
    for (int i = 0; i < 4; ++i) bias.data()[i] = b0;
    store.add("e_net.head.bias", std::move(bias));
}

inline ad::Tensor material_net(const std::map<std::string, ad::Tensor>& p,
                               const ad::Tensor& rest, const ad::Tensor& features,
                               const std::vector<std::int64_t>& idx, std::int64_t k,
                               const MaterialNetConfig& cfg) {
    const std::int64_t n = rest.dim(0);
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_width));
    ad::Tensor h = ad::add(ad::elu(nn::linear(p, "e_net.point_embed", rest)),
                           ad::elu(nn::linear(p, "e_net.feat_embed", features)));
    const std::vector<std::int64_t> tokens = token_rows(n, cfg.max_tokens);
    for (std::int64_t b = 0; b < cfg.num_blocks; ++b) {
        const std::string base = "e_net.block" + std::to_string(b);
        // neighborhood cross-attention
        ad::Tensor scores = ad::scale(
            ad::local_attn_scores(nn::linear(p, base + ".lq", h), nn::linear(p, base + ".lk", h),
                                  idx, k),
            inv_sqrt_h);
        h = ad::add(h, ad::local_attn_apply(ad::softmax_rows(scores),
                                            nn::linear(p, base + ".lv", h), idx, k));
        // global attention over the token subset
        ad::Tensor keys = ad::gather_rows(nn::linear(p, base + ".gk", h), tokens);
        ad::Tensor vals = ad::gather_rows(nn::linear(p, base + ".gv", h), tokens);
        ad::Tensor gscores = ad::scale(
            ad::matmul(nn::linear(p, base + ".gq", h), ad::transpose(keys)), inv_sqrt_h);
        h = ad::add(h, ad::matmul(ad::softmax_rows(gscores), vals));
        // feed-forward
        h = ad::add(h, nn::linear(p, base + ".ffn2", ad::elu(nn::linear(p, base + ".ffn1", h))));
    }
    ad::Tensor raw = nn::linear(p, "e_net.head", h);
    return ad::shift(ad::scale(ad::softplus(raw), cfg.e_scale), cfg.e_min);
}

}  // namespace anisim::material
