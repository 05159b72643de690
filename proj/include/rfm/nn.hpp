#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rfm/ops.hpp"
#include "rfm/rng.hpp"
#include "rfm/tensor.hpp"

// Parameter containers, layer building blocks, and the optimizer. Parameters
// live in an ordered map so that every walk over them (init, clip, Adam,
// serialization) visits names in the same lexicographic order; that ordering
// is part of the determinism contract.
namespace rfm {

template <typename T>
using LayerParamsT = std::map<std::string, TensorT<T>>;

using LayerParams = LayerParamsT<float>;

// ----------------------------------------------------------------- init ----

template <typename T>
TensorT<T>& register_param(LayerParamsT<T>& params, const std::string& name,
                           std::vector<int> shape) {
    if (params.count(name)) throw UsageError("parameter registered twice: " + name);
    auto [it, ok] = params.emplace(name, TensorT<T>(std::move(shape), true));
    (void)ok;
    return it->second;
}

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); draws happen in registration
// order from the caller's stream, so layouts are reproducible
template <typename T>
void init_uniform(TensorT<T>& t, Rng& rng, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (long i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.uniform_open(-bound, bound));
}

// linear layer params: name.w [in, out], name.b [out]; bias starts at zero
template <typename T>
void init_linear(LayerParamsT<T>& params, Rng& rng, const std::string& name, int in, int out) {
    auto& w = register_param(params, name + ".w", {in, out});
    init_uniform(w, rng, in);
    register_param(params, name + ".b", {out});
}

// conv layer params: name.w [cout, cin, k], name.b [cout]; zero_init makes
// the whole layer start as the zero map (output head convention)
template <typename T>
void init_conv(LayerParamsT<T>& params, Rng& rng, const std::string& name, int cout, int cin,
               int k, bool zero_init = false) {
    auto& w = register_param(params, name + ".w", {cout, cin, k});
    if (!zero_init) init_uniform(w, rng, cin * k);
    register_param(params, name + ".b", {cout});
}

template <typename T>
void init_norm(LayerParamsT<T>& params, const std::string& name, int dim) {
    auto& gain = register_param(params, name + ".g", {dim});
    gain.fill(T(1));
    register_param(params, name + ".b", {dim});
}

template <typename T>
TensorT<T> param(const LayerParamsT<T>& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("unknown parameter: " + name);
    return it->second;
}

template <typename T>
long param_count(const LayerParamsT<T>& params) {
    long n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

template <typename T>
void zero_grads(LayerParamsT<T>& params) {
    for (auto& [name, t] : params) t.zero_grad();
}

// value-level copy with optional precision change (f64 shadow mode)
template <typename Dst, typename Src>
LayerParamsT<Dst> cast_params(const LayerParamsT<Src>& params) {
    LayerParamsT<Dst> out;
    for (const auto& [name, t] : params) {
        TensorT<Dst> copy(t.shape(), t.requires_grad());
        for (long i = 0; i < t.size(); ++i) copy.data()[i] = static_cast<Dst>(t.data()[i]);
        out.emplace(name, std::move(copy));
    }
    return out;
}

// ---------------------------------------------------------------- layers ----

// x: [R, in] -> [R, out]
template <typename T>
TensorT<T> linear(GraphT<T>* g, const LayerParamsT<T>& params, const std::string& name,
                  TensorT<T> x) {
    return ops::add_rowvec(g, ops::matmul(g, x, param(params, name + ".w")),
                           param(params, name + ".b"));
}

// sequence conv: x [L, C_in] -> [L, C_out], kernel padded to keep the length
template <typename T>
TensorT<T> conv1d_seq(GraphT<T>* g, const LayerParamsT<T>& params, const std::string& name,
                      TensorT<T> x) {
    auto w = param(params, name + ".w");
    const int k = w.dim(2);
    const int pad = (k - 1) / 2;
    if ((k - 1) % 2 != 0)
        throw ConfigError("conv1d_seq: even kernel width " + std::to_string(k) +
                          " cannot preserve sequence length");
    auto y = ops::conv1d(g, ops::transpose2d(g, x), w, pad);
    y = ops::add_bias_chan(g, y, param(params, name + ".b"));
    return ops::transpose2d(g, y);
}

// multi-head self-attention over x [L, H]; params: name.{q,k,v,o}.{w,b}
template <typename T>
TensorT<T> self_attention(GraphT<T>* g, const LayerParamsT<T>& params, const std::string& name,
                          TensorT<T> x, int heads) {
    const int hdim = x.dim(1);
    if (hdim % heads != 0)
        throw ConfigError("self_attention: hidden dim " + std::to_string(hdim) +
                          " not divisible by " + std::to_string(heads) + " heads");
    const int dh = hdim / heads;
    auto q = linear(g, params, name + ".q", x);
    auto k = linear(g, params, name + ".k", x);
    auto v = linear(g, params, name + ".v", x);
    const T inv_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    std::vector<TensorT<T>> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        auto qh = ops::slice_cols(g, q, h * dh, (h + 1) * dh);
        auto kh = ops::slice_cols(g, k, h * dh, (h + 1) * dh);
        auto vh = ops::slice_cols(g, v, h * dh, (h + 1) * dh);
        auto scores = ops::scale(g, ops::matmul(g, qh, ops::transpose2d(g, kh)), inv_scale);
        auto attn = ops::softmax_lastdim(g, scores);
        head_outs.push_back(ops::matmul(g, attn, vh));
    }
    auto merged = ops::concat_cols(g, head_outs);
    return linear(g, params, name + ".o", merged);
}

template <typename T>
void init_self_attention(LayerParamsT<T>& params, Rng& rng, const std::string& name, int hdim) {
    init_linear(params, rng, name + ".q", hdim, hdim);
    init_linear(params, rng, name + ".k", hdim, hdim);
    init_linear(params, rng, name + ".v", hdim, hdim);
    init_linear(params, rng, name + ".o", hdim, hdim);
}

// --------------------------------------------------------------- optimizer --

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers keyed like the params. `step` counts completed
// updates and drives bias correction.
struct AdamState {
    std::map<std::string, std::vector<float>> m;
    std::map<std::string, std::vector<float>> v;
    long step = 0;
};

inline void adam_init(AdamState& state, const LayerParams& params) {
    state.step = 0;
    state.m.clear();
    state.v.clear();
    for (const auto& [name, t] : params) {
        state.m[name].assign(static_cast<size_t>(t.size()), 0.0f);
        state.v[name].assign(static_cast<size_t>(t.size()), 0.0f);
    }
}

inline void adam_step(LayerParams& params, AdamState& state, const AdamConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, t] : params) {
        if (!t.has_grad()) throw UsageError("adam_step: missing gradient for " + name);
        auto mit = state.m.find(name);
        auto vit = state.v.find(name);
        if (mit == state.m.end() || vit == state.v.end() ||
            mit->second.size() != static_cast<size_t>(t.size()))
            throw ShapeError("adam_step: state does not match parameter " + name);
        float* m = mit->second.data();
        float* v = vit->second.data();
        const float* grad = t.grad();
        float* val = t.data();
        const long n = t.size();
        for (long i = 0; i < n; ++i) {
            const double gi = grad[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            val[i] = static_cast<float>(val[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

// Scales all gradients so the global L2 norm is at most max_norm; returns
// the pre-clip norm. Accumulation walks params in map order.
inline double clip_global_norm(LayerParams& params, double max_norm) {
    double sumsq = 0.0;
    for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        const float* grad = t.grad();
        for (long i = 0; i < t.size(); ++i) sumsq += static_cast<double>(grad[i]) * grad[i];
    }
    const double norm = std::sqrt(sumsq);
    if (max_norm > 0.0 && norm > max_norm) {
        const float factor = static_cast<float>(max_norm / norm);
        for (auto& [name, t] : params) {
            if (!t.has_grad()) continue;
            float* grad = t.grad();
            for (long i = 0; i < t.size(); ++i) grad[i] *= factor;
        }
    }
    return norm;
}

}  // namespace rfm
