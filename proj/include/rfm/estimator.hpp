#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rfm/nn.hpp"
#include "rfm/ops.hpp"
#include "rfm/rng.hpp"
#include "rfm/tensor.hpp"

// The conditional vector-field estimator v(x, t | c). A condition sequence
// is stretched to the latent frame rate by duplication, both branches pass
// through shallow conv stems, and the halves are fused by channel concat.
// A timestep token is prepended, a learnable positional table added, then N
// pre-norm transformer blocks (self-attention + conv FFN) and a norm + conv
// output head produce one field vector per latent frame.
namespace rfm {

struct EstimatorConfig {
    int latent_dim = 4;     // channels of x
    int cond_dim = 8;       // channels of c
    int hidden_dim = 64;    // H, split in half between the x and c branches
    int layers = 2;         // transformer block count
    int heads = 4;
    int ffn_dim = 128;
    int max_seq_len = 64;   // latent frames; the timestep token rides on top
    int regulate_ratio = 1; // latent frames per condition frame
    // reserved for a variant that adds cross-attention to the condition
    // sequence; the current architecture fuses by channel concat only
    bool cross_attention = false;

    void validate() const;
    bool operator==(const EstimatorConfig&) const = default;
};

// throws ConfigError on invalid or unknown fields
EstimatorConfig estimator_config_from_json(const std::string& text);
std::string estimator_config_to_json(const EstimatorConfig& cfg);

// exact trainable parameter count for the architecture below; the closed
// form is spelled out in estimator.cpp and verified against the live
// parameter map in tests
long count_params(const EstimatorConfig& cfg);

struct ConditionSeq {
    Tensor features;         // [L_c, D_c]
    bool null_flag = false;  // true: fusion consumes zeros of the same shape
};

struct LatentSeq {
    Tensor values;  // [L_x, D_x]
};

// ------------------------------------------------------------- components --

// condition frame i feeds latent frames [i*r, (i+1)*r)
template <typename T>
TensorT<T> length_regulate(GraphT<T>* g, TensorT<T> cond, int r) {
    if (r < 1) throw ConfigError("length_regulate: ratio must be >= 1, got " + std::to_string(r));
    return ops::repeat_rows(g, cond, r);
}

// raw sinusoid over H/2 geometric frequencies (base 10000) of t*1000,
// sines first, then cosines; no parameters involved
template <typename T>
TensorT<T> sinusoid_embed(double t, int hidden_dim) {
    if (t < 0.0 || t > 1.0)
        throw DomainError("timestep must lie in [0, 1], got " + std::to_string(t));
    if (hidden_dim % 2 != 0)
        throw ConfigError("sinusoid_embed: hidden dim must be even, got " + std::to_string(hidden_dim));
    const int half = hidden_dim / 2;
    TensorT<T> out({1, hidden_dim});
    const double pos = t * 1000.0;
    for (int i = 0; i < half; ++i) {
        const double expo = half > 1 ? static_cast<double>(i) / (half - 1) : 0.0;
        const double freq = std::pow(10000.0, -expo);
        out.data()[i] = static_cast<T>(std::sin(pos * freq));
        out.data()[half + i] = static_cast<T>(std::cos(pos * freq));
    }
    return out;
}

// sinusoid + 2-layer MLP; returns the [1, H] token row
template <typename T>
TensorT<T> timestep_embed(GraphT<T>* g, const LayerParamsT<T>& params, double t, int hidden_dim) {
    auto raw = sinusoid_embed<T>(t, hidden_dim);
    auto h = ops::gelu(g, linear(g, params, "time.l1", raw));
    return linear(g, params, "time.l2", h);
}

// channel concat of the two projected branches; lengths must already agree
template <typename T>
TensorT<T> fuse(GraphT<T>* g, TensorT<T> x_proj, TensorT<T> c_proj) {
    if (x_proj.dim(0) != c_proj.dim(0))
        throw AlignmentError("fuse: branch lengths differ, " + shape_str(x_proj.shape()) + " vs " +
                             shape_str(c_proj.shape()) + " (regulate_ratio mismatch)");
    return ops::concat_cols<T>(g, {x_proj, c_proj});
}

// ---------------------------------------------------------------- forward --

// x: [L_x, D_x], cond: [L_c, D_c]; null_cond replaces cond with zeros.
// Returns the field [L_x, D_x]. Pure function of its arguments.
template <typename T>
TensorT<T> estimator_forward(GraphT<T>* g, const LayerParamsT<T>& params,
                             const EstimatorConfig& cfg, TensorT<T> x, double t, TensorT<T> cond,
                             bool null_cond) {
    cfg.validate();
    if (x.rank() != 2 || x.dim(1) != cfg.latent_dim)
        throw ShapeError("estimator_forward: x must be [L_x, " + std::to_string(cfg.latent_dim) +
                         "], got " + shape_str(x.shape()));
    if (cond.rank() != 2 || cond.dim(1) != cfg.cond_dim)
        throw ShapeError("estimator_forward: cond must be [L_c, " + std::to_string(cfg.cond_dim) +
                         "], got " + shape_str(cond.shape()));
    const int len = x.dim(0);
    if (len != cfg.regulate_ratio * cond.dim(0))
        throw AlignmentError("estimator_forward: L_x " + std::to_string(len) + " != r*L_c = " +
                             std::to_string(cfg.regulate_ratio) + "*" + std::to_string(cond.dim(0)));
    if (len > cfg.max_seq_len)
        throw CapacityError("estimator_forward: sequence length " + std::to_string(len) +
                            " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    if (t < 0.0 || t > 1.0)
        throw DomainError("estimator_forward: t must lie in [0, 1], got " + std::to_string(t));

    if (null_cond) {
        TensorT<T> zeros(cond.shape());
        cond = zeros;
    }
    auto c_reg = length_regulate(g, cond, cfg.regulate_ratio);  // [L_x, D_c]

    auto x_proj = conv1d_seq(g, params, "stem.x2",
                             ops::gelu(g, conv1d_seq(g, params, "stem.x1", x)));
    auto c_proj = conv1d_seq(g, params, "stem.c2",
                             ops::gelu(g, conv1d_seq(g, params, "stem.c1", c_reg)));
    auto h = fuse(g, x_proj, c_proj);  // [L_x, H]

    auto token = timestep_embed(g, params, t, cfg.hidden_dim);  // [1, H]
    auto seq = ops::concat_rows<T>(g, {token, h});              // [L_x + 1, H]
    auto pos = ops::slice_rows(g, param(params, "pos"), 0, len + 1);
    seq = ops::add(g, seq, pos);

    for (int i = 0; i < cfg.layers; ++i) {
        const std::string blk = "blk" + std::to_string(i);
        auto normed = ops::layer_norm(g, seq, param(params, blk + ".ln1.g"),
                                      param(params, blk + ".ln1.b"));
        seq = ops::add(g, seq, self_attention(g, params, blk + ".attn", normed, cfg.heads));
        auto normed2 = ops::layer_norm(g, seq, param(params, blk + ".ln2.g"),
                                       param(params, blk + ".ln2.b"));
        auto f = conv1d_seq(g, params, blk + ".ffn2",
                            ops::gelu(g, conv1d_seq(g, params, blk + ".ffn1", normed2)));
        seq = ops::add(g, seq, f);
        if (seq.dim(0) != len + 1)
            throw ShapeError("estimator_forward: block " + std::to_string(i) +
                             " changed the sequence length");
    }

    // the timestep token has no latent frame; drop its row before the head
    auto body = ops::slice_rows(g, seq, 1, len + 1);
    auto out = ops::layer_norm(g, body, param(params, "head_norm.g"), param(params, "head_norm.b"));
    return conv1d_seq(g, params, "head", out);  // [L_x, D_x]
}

inline Tensor estimator_forward(Graph* g, const LayerParams& params, const EstimatorConfig& cfg,
                                const LatentSeq& x, double t, const ConditionSeq& c) {
    return estimator_forward<float>(g, params, cfg, x.values, t, c.features, c.null_flag);
}

// ------------------------------------------------------------------- init --

// Parameter registration happens in a fixed order so the init draws are
// reproducible from the seed. Weight layout (also the count_params basis):
//   stem.{x1,x2,c1,c2}   conv stems to H/2 per branch (K=3)
//   time.{l1,l2}         timestep MLP, H -> H -> H
//   pos                  positional table [max_seq_len + 1, H], zero-init
//   blk{i}.ln1/.attn/.ln2/.ffn1/.ffn2
//   head_norm, head      output norm + conv to D_x (K=3), zero-init
template <typename T>
LayerParamsT<T> init_estimator(const EstimatorConfig& cfg, Rng& rng) {
    cfg.validate();
    LayerParamsT<T> p;
    const int half = cfg.hidden_dim / 2;
    init_conv(p, rng, "stem.x1", half, cfg.latent_dim, 3);
    init_conv(p, rng, "stem.x2", half, half, 3);
    init_conv(p, rng, "stem.c1", half, cfg.cond_dim, 3);
    init_conv(p, rng, "stem.c2", half, half, 3);
    init_linear(p, rng, "time.l1", cfg.hidden_dim, cfg.hidden_dim);
    init_linear(p, rng, "time.l2", cfg.hidden_dim, cfg.hidden_dim);
    register_param(p, "pos", {cfg.max_seq_len + 1, cfg.hidden_dim});
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string blk = "blk" + std::to_string(i);
        init_norm(p, blk + ".ln1", cfg.hidden_dim);
        init_self_attention(p, rng, blk + ".attn", cfg.hidden_dim);
        init_norm(p, blk + ".ln2", cfg.hidden_dim);
        init_conv(p, rng, blk + ".ffn1", cfg.ffn_dim, cfg.hidden_dim, 3);
        init_conv(p, rng, blk + ".ffn2", cfg.hidden_dim, cfg.ffn_dim, 3);
    }
    init_norm(p, "head_norm", cfg.hidden_dim);
    init_conv(p, rng, "head", cfg.latent_dim, cfg.hidden_dim, 3, /*zero_init=*/true);
    return p;
}

inline LayerParams init_estimator(const EstimatorConfig& cfg, uint64_t seed) {
    Rng root(seed);
    Rng stream = root.fork(Stream::ParamInit);
    return init_estimator<float>(cfg, stream);
}

}  // namespace rfm
