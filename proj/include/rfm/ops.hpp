#pragma once

#include <cmath>
#include <vector>

#include "rfm/kernels.hpp"
#include "rfm/tensor.hpp"

// Differentiable ops over TensorT. Every op validates shapes, runs the
// forward kernel, and, when a graph is supplied and some input carries
// gradients, records a backward closure on the tape. Passing g == nullptr
// runs the op in plain inference mode.
//
// Backward closures accumulate with += in a fixed order. The heavy ones
// (matmul, conv) route through rfm::kernels, whose parallel variants assign
// each output element to exactly one thread, so gradients are bitwise
// reproducible at any thread count.
namespace rfm::ops {

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <typename T>
bool track(GraphT<T>* g, std::initializer_list<TensorT<T>> inputs) {
    if (!g) return false;
    for (const auto& t : inputs)
        if (t.requires_grad()) return true;
    return false;
}

}  // namespace detail

// ------------------------------------------------------------ elementwise --

template <typename T>
TensorT<T> add(GraphT<T>* g, TensorT<T> a, TensorT<T> b) {
    detail::require(a.shape() == b.shape(),
                    "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    TensorT<T> out(a.shape());
    const long n = out.size();
    for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (detail::track(g, {a, b})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (a.requires_grad()) a.ensure_grad();
        if (b.requires_grad()) b.ensure_grad();
        g->record("add", [a, b, out]() mutable {
            const long n = out.size();
            if (a.requires_grad())
                for (long i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
            if (b.requires_grad())
                for (long i = 0; i < n; ++i) b.grad()[i] += out.grad()[i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> sub(GraphT<T>* g, TensorT<T> a, TensorT<T> b) {
    detail::require(a.shape() == b.shape(),
                    "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    TensorT<T> out(a.shape());
    const long n = out.size();
    for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (detail::track(g, {a, b})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (a.requires_grad()) a.ensure_grad();
        if (b.requires_grad()) b.ensure_grad();
        g->record("sub", [a, b, out]() mutable {
            const long n = out.size();
            if (a.requires_grad())
                for (long i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
            if (b.requires_grad())
                for (long i = 0; i < n; ++i) b.grad()[i] -= out.grad()[i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> mul(GraphT<T>* g, TensorT<T> a, TensorT<T> b) {
    detail::require(a.shape() == b.shape(),
                    "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    TensorT<T> out(a.shape());
    const long n = out.size();
    for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::track(g, {a, b})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (a.requires_grad()) a.ensure_grad();
        if (b.requires_grad()) b.ensure_grad();
        g->record("mul", [a, b, out]() mutable {
            const long n = out.size();
            if (a.requires_grad())
                for (long i = 0; i < n; ++i) a.grad()[i] += out.grad()[i] * b.data()[i];
            if (b.requires_grad())
                for (long i = 0; i < n; ++i) b.grad()[i] += out.grad()[i] * a.data()[i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> scale(GraphT<T>* g, TensorT<T> a, T factor) {
    TensorT<T> out(a.shape());
    const long n = out.size();
    for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] * factor;
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("scale", [a, out, factor]() mutable {
            const long n = out.size();
            for (long i = 0; i < n; ++i) a.grad()[i] += out.grad()[i] * factor;
        });
    }
    return out;
}

template <typename T>
TensorT<T> gelu(GraphT<T>* g, TensorT<T> a) {
    TensorT<T> out(a.shape());
    kernels::gelu(a.data(), out.data(), a.size());
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("gelu", [a, out]() mutable {
            kernels::gelu_backward(a.data(), out.grad(), a.grad(), a.size());
        });
    }
    return out;
}

// -------------------------------------------------------------- broadcast --

// a: [R, C], v: [C]; adds v to every row
template <typename T>
TensorT<T> add_rowvec(GraphT<T>* g, TensorT<T> a, TensorT<T> v) {
    detail::require(a.rank() == 2 && v.rank() == 1 && a.dim(1) == v.dim(0),
                    "add_rowvec: want [R, C] + [C], got " + shape_str(a.shape()) + " + " +
                        shape_str(v.shape()));
    const int rows = a.dim(0), cols = a.dim(1);
    TensorT<T> out(a.shape());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out.data()[static_cast<long>(r) * cols + c] =
                a.data()[static_cast<long>(r) * cols + c] + v.data()[c];
    if (detail::track(g, {a, v})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (a.requires_grad()) a.ensure_grad();
        if (v.requires_grad()) v.ensure_grad();
        g->record("add_rowvec", [a, v, out, rows, cols]() mutable {
            if (a.requires_grad()) {
                const long n = out.size();
                for (long i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
            }
            if (v.requires_grad())
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        v.grad()[c] += out.grad()[static_cast<long>(r) * cols + c];
        });
    }
    return out;
}

// y: [C, L], b: [C]; adds b[c] along the length axis (conv bias)
template <typename T>
TensorT<T> add_bias_chan(GraphT<T>* g, TensorT<T> y, TensorT<T> b) {
    detail::require(y.rank() == 2 && b.rank() == 1 && y.dim(0) == b.dim(0),
                    "add_bias_chan: want [C, L] + [C], got " + shape_str(y.shape()) + " + " +
                        shape_str(b.shape()));
    const int chans = y.dim(0), len = y.dim(1);
    TensorT<T> out(y.shape());
    for (int c = 0; c < chans; ++c)
        for (int l = 0; l < len; ++l)
            out.data()[static_cast<long>(c) * len + l] =
                y.data()[static_cast<long>(c) * len + l] + b.data()[c];
    if (detail::track(g, {y, b})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (y.requires_grad()) y.ensure_grad();
        if (b.requires_grad()) b.ensure_grad();
        g->record("add_bias_chan", [y, b, out, chans, len]() mutable {
            if (y.requires_grad()) {
                const long n = out.size();
                for (long i = 0; i < n; ++i) y.grad()[i] += out.grad()[i];
            }
            if (b.requires_grad())
                for (int c = 0; c < chans; ++c)
                    for (int l = 0; l < len; ++l)
                        b.grad()[c] += out.grad()[static_cast<long>(c) * len + l];
        });
    }
    return out;
}

// ----------------------------------------------------------------- matmul --

template <typename T>
TensorT<T> matmul(GraphT<T>* g, TensorT<T> a, TensorT<T> b) {
    detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                    "matmul: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorT<T> out({m, n});
    kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
    if (detail::track(g, {a, b})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (a.requires_grad()) a.ensure_grad();
        if (b.requires_grad()) b.ensure_grad();
        g->record("matmul", [a, b, out, m, k, n]() mutable {
            if (a.requires_grad()) {
                // dA = dC * B^T
                std::vector<T> tmp(static_cast<size_t>(m) * k);
                kernels::matmul_nt(out.grad(), b.data(), tmp.data(), m, n, k);
                for (long i = 0; i < static_cast<long>(tmp.size()); ++i) a.grad()[i] += tmp[i];
            }
            if (b.requires_grad()) {
                // dB = A^T * dC
                std::vector<T> tmp(static_cast<size_t>(k) * n);
                kernels::matmul_tn(a.data(), out.grad(), tmp.data(), m, k, n);
                for (long i = 0; i < static_cast<long>(tmp.size()); ++i) b.grad()[i] += tmp[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> transpose2d(GraphT<T>* g, TensorT<T> a) {
    detail::require(a.rank() == 2, "transpose2d: want rank 2, got " + shape_str(a.shape()));
    const int rows = a.dim(0), cols = a.dim(1);
    TensorT<T> out({cols, rows});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out.data()[static_cast<long>(c) * rows + r] = a.data()[static_cast<long>(r) * cols + c];
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("transpose2d", [a, out, rows, cols]() mutable {
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    a.grad()[static_cast<long>(r) * cols + c] +=
                        out.grad()[static_cast<long>(c) * rows + r];
        });
    }
    return out;
}

// ------------------------------------------------------------------- conv --

// x: [Cin, L], w: [Cout, Cin, K]; zero padding `pad` on both ends
template <typename T>
TensorT<T> conv1d(GraphT<T>* g, TensorT<T> x, TensorT<T> w, int pad) {
    detail::require(x.rank() == 2 && w.rank() == 3 && w.dim(1) == x.dim(0),
                    "conv1d: want x [Cin, L] and w [Cout, Cin, K], got " + shape_str(x.shape()) +
                        " and " + shape_str(w.shape()));
    const int cin = x.dim(0), len = x.dim(1), cout = w.dim(0), ksize = w.dim(2);
    const int lout = len + 2 * pad - ksize + 1;
    detail::require(lout > 0, "conv1d: kernel " + std::to_string(ksize) + " too wide for length " +
                                  std::to_string(len) + " with pad " + std::to_string(pad));
    TensorT<T> out({cout, lout});
    kernels::conv1d(x.data(), w.data(), out.data(), cin, len, cout, ksize, pad);
    if (detail::track(g, {x, w})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (x.requires_grad()) x.ensure_grad();
        if (w.requires_grad()) w.ensure_grad();
        g->record("conv1d", [x, w, out, cin, len, cout, ksize, pad]() mutable {
            if (x.requires_grad())
                kernels::conv1d_dx(out.grad(), w.data(), x.grad(), cin, len, cout, ksize, pad);
            if (w.requires_grad())
                kernels::conv1d_dw(x.data(), out.grad(), w.grad(), cin, len, cout, ksize, pad);
        });
    }
    return out;
}

// ---------------------------------------------------------- normalization --

template <typename T>
TensorT<T> softmax_lastdim(GraphT<T>* g, TensorT<T> a) {
    detail::require(a.rank() == 2, "softmax_lastdim: want rank 2, got " + shape_str(a.shape()));
    const int rows = a.dim(0), n = a.dim(1);
    TensorT<T> out(a.shape());
    kernels::softmax_rows(a.data(), out.data(), rows, n);
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("softmax", [a, out, rows, n]() mutable {
            kernels::softmax_backward_rows(out.data(), out.grad(), a.grad(), rows, n);
        });
    }
    return out;
}

template <typename T>
TensorT<T> layer_norm(GraphT<T>* g, TensorT<T> x, TensorT<T> gain, TensorT<T> bias,
                      T eps = T(1e-5)) {
    detail::require(x.rank() == 2 && gain.rank() == 1 && bias.rank() == 1 &&
                        gain.dim(0) == x.dim(1) && bias.dim(0) == x.dim(1),
                    "layer_norm: want x [R, C] with gain/bias [C], got " + shape_str(x.shape()) +
                        ", " + shape_str(gain.shape()) + ", " + shape_str(bias.shape()));
    const int rows = x.dim(0), n = x.dim(1);
    TensorT<T> out(x.shape());
    kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), out.data(), rows, n, eps);
    if (detail::track(g, {x, gain, bias})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        if (x.requires_grad()) x.ensure_grad();
        if (gain.requires_grad()) gain.ensure_grad();
        if (bias.requires_grad()) bias.ensure_grad();
        g->record("layer_norm", [x, gain, bias, out, rows, n, eps]() mutable {
            if (x.requires_grad())
                kernels::layer_norm_backward_rows(x.data(), gain.data(), out.grad(), x.grad(), rows,
                                                  n, eps);
            if (gain.requires_grad() || bias.requires_grad()) {
                for (int r = 0; r < rows; ++r) {
                    const T* xr = x.data() + static_cast<long>(r) * n;
                    const T* dyr = out.grad() + static_cast<long>(r) * n;
                    T mean = T(0);
                    for (int i = 0; i < n; ++i) mean += xr[i];
                    mean /= T(n);
                    T var = T(0);
                    for (int i = 0; i < n; ++i) {
                        const T d = xr[i] - mean;
                        var += d * d;
                    }
                    var /= T(n);
                    const T inv = T(1) / std::sqrt(var + eps);
                    for (int i = 0; i < n; ++i) {
                        if (gain.requires_grad()) gain.grad()[i] += dyr[i] * (xr[i] - mean) * inv;
                        if (bias.requires_grad()) bias.grad()[i] += dyr[i];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------- shape surgery --

template <typename T>
TensorT<T> slice_rows(GraphT<T>* g, TensorT<T> a, int r0, int r1) {
    detail::require(a.rank() == 2 && 0 <= r0 && r0 < r1 && r1 <= a.dim(0),
                    "slice_rows: bad range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                        ") for " + shape_str(a.shape()));
    const int cols = a.dim(1);
    TensorT<T> out({r1 - r0, cols});
    for (int r = r0; r < r1; ++r)
        for (int c = 0; c < cols; ++c)
            out.data()[static_cast<long>(r - r0) * cols + c] = a.data()[static_cast<long>(r) * cols + c];
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("slice_rows", [a, out, r0, r1, cols]() mutable {
            for (int r = r0; r < r1; ++r)
                for (int c = 0; c < cols; ++c)
                    a.grad()[static_cast<long>(r) * cols + c] +=
                        out.grad()[static_cast<long>(r - r0) * cols + c];
        });
    }
    return out;
}

template <typename T>
TensorT<T> concat_rows(GraphT<T>* g, const std::vector<TensorT<T>>& parts) {
    detail::require(!parts.empty(), "concat_rows: no inputs");
    const int cols = parts[0].dim(1);
    int rows = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        detail::require(p.rank() == 2 && p.dim(1) == cols,
                        "concat_rows: column mismatch at " + shape_str(p.shape()));
        rows += p.dim(0);
        any_grad = any_grad || p.requires_grad();
    }
    TensorT<T> out({rows, cols});
    long off = 0;
    for (const auto& p : parts) {
        const long n = p.size();
        for (long i = 0; i < n; ++i) out.data()[off + i] = p.data()[i];
        off += n;
    }
    if (g && any_grad) {
        out.set_requires_grad(true);
        out.ensure_grad();
        auto parts_copy = parts;
        for (auto& p : parts_copy)
            if (p.requires_grad()) p.ensure_grad();
        g->record("concat_rows", [parts_copy, out]() mutable {
            long off = 0;
            for (auto& p : parts_copy) {
                const long n = p.size();
                if (p.requires_grad())
                    for (long i = 0; i < n; ++i) p.grad()[i] += out.grad()[off + i];
                off += n;
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> slice_cols(GraphT<T>* g, TensorT<T> a, int c0, int c1) {
    detail::require(a.rank() == 2 && 0 <= c0 && c0 < c1 && c1 <= a.dim(1),
                    "slice_cols: bad range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                        ") for " + shape_str(a.shape()));
    const int rows = a.dim(0), cols = a.dim(1), width = c1 - c0;
    TensorT<T> out({rows, width});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < width; ++c)
            out.data()[static_cast<long>(r) * width + c] = a.data()[static_cast<long>(r) * cols + c0 + c];
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("slice_cols", [a, out, c0, rows, cols, width]() mutable {
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < width; ++c)
                    a.grad()[static_cast<long>(r) * cols + c0 + c] +=
                        out.grad()[static_cast<long>(r) * width + c];
        });
    }
    return out;
}

template <typename T>
TensorT<T> concat_cols(GraphT<T>* g, const std::vector<TensorT<T>>& parts) {
    detail::require(!parts.empty(), "concat_cols: no inputs");
    const int rows = parts[0].dim(0);
    int cols = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        detail::require(p.rank() == 2 && p.dim(0) == rows,
                        "concat_cols: row mismatch at " + shape_str(p.shape()));
        cols += p.dim(1);
        any_grad = any_grad || p.requires_grad();
    }
    TensorT<T> out({rows, cols});
    int coff = 0;
    for (const auto& p : parts) {
        const int w = p.dim(1);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w; ++c)
                out.data()[static_cast<long>(r) * cols + coff + c] = p.data()[static_cast<long>(r) * w + c];
        coff += w;
    }
    if (g && any_grad) {
        out.set_requires_grad(true);
        out.ensure_grad();
        auto parts_copy = parts;
        for (auto& p : parts_copy)
            if (p.requires_grad()) p.ensure_grad();
        g->record("concat_cols", [parts_copy, out, rows, cols]() mutable {
            int coff = 0;
            for (auto& p : parts_copy) {
                const int w = p.dim(1);
                if (p.requires_grad())
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < w; ++c)
                            p.grad()[static_cast<long>(r) * w + c] +=
                                out.grad()[static_cast<long>(r) * cols + coff + c];
                coff += w;
            }
        });
    }
    return out;
}

// row i of the input becomes rows [i*times, (i+1)*times) of the output
template <typename T>
TensorT<T> repeat_rows(GraphT<T>* g, TensorT<T> a, int times) {
    detail::require(a.rank() == 2 && times >= 1,
                    "repeat_rows: want rank 2 and times >= 1, got " + shape_str(a.shape()) +
                        " x " + std::to_string(times));
    const int rows = a.dim(0), cols = a.dim(1);
    TensorT<T> out({rows * times, cols});
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < times; ++j)
            for (int c = 0; c < cols; ++c)
                out.data()[(static_cast<long>(r) * times + j) * cols + c] =
                    a.data()[static_cast<long>(r) * cols + c];
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("repeat_rows", [a, out, rows, cols, times]() mutable {
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < times; ++j)
                    for (int c = 0; c < cols; ++c)
                        a.grad()[static_cast<long>(r) * cols + c] +=
                            out.grad()[(static_cast<long>(r) * times + j) * cols + c];
        });
    }
    return out;
}

// ------------------------------------------------------------- reductions --

template <typename T>
TensorT<T> sum_all(GraphT<T>* g, TensorT<T> a) {
    TensorT<T> out({1});
    T acc = T(0);
    const long n = a.size();
    for (long i = 0; i < n; ++i) acc += a.data()[i];
    out.data()[0] = acc;
    if (detail::track(g, {a})) {
        out.set_requires_grad(true);
        out.ensure_grad();
        a.ensure_grad();
        g->record("sum_all", [a, out]() mutable {
            const T go = out.grad()[0];
            const long n = a.size();
            for (long i = 0; i < n; ++i) a.grad()[i] += go;
        });
    }
    return out;
}

template <typename T>
TensorT<T> mean_all(GraphT<T>* g, TensorT<T> a) {
    return scale(g, sum_all(g, a), T(1) / T(a.size()));
}

// mean over elements of (a - b)^2, the workhorse regression loss
template <typename T>
TensorT<T> mse(GraphT<T>* g, TensorT<T> a, TensorT<T> b) {
    auto d = sub(g, a, b);
    return mean_all(g, mul(g, d, d));
}

}  // namespace rfm::ops
