#pragma once

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

// Raw dense kernels behind the tensor ops. Each kernel comes in a serial
// reference version and an OpenMP version parallelized over independent
// output elements. Both call the same per-element routines, so the parallel
// results are bit-identical to the serial ones at any thread count; tests
// and tools/bench_kernels.cpp compare the two directly.
namespace rfm::kernels {

namespace detail {

template <typename T>
inline T dot(const T* a, const T* b, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// c[i,j] = sum_k a[i,k] * b[k,j]; strided access on b
template <typename T>
inline T dot_strided(const T* a, const T* b, int n, int stride) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i * stride];
    return acc;
}

// one output row of C = A * B, accumulated in k-major order
template <typename T>
inline void matmul_row(const T* a, const T* b, T* c, int k, int n) {
    for (int j = 0; j < n; ++j) c[j] = T(0);
    for (int p = 0; p < k; ++p) {
        const T av = a[p];
        const T* brow = b + static_cast<long>(p) * n;
        for (int j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

// one output row of C = A * B^T (B is [n x k] row-major)
template <typename T>
inline void matmul_nt_row(const T* a, const T* b, T* c, int k, int n) {
    for (int j = 0; j < n; ++j) c[j] = dot(a, b + static_cast<long>(j) * k, k);
}

// one output row of C = A^T * B where A is [m x k] row-major; row index p of
// C corresponds to column p of A
template <typename T>
inline void matmul_tn_row(const T* a_col, const T* b, T* c, int m, int n, int k_stride) {
    for (int j = 0; j < n; ++j) c[j] = T(0);
    for (int i = 0; i < m; ++i) {
        const T av = a_col[static_cast<long>(i) * k_stride];
        const T* brow = b + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

// y[co, o] = sum_{ci, t} x[ci, o - pad + t] * w[co, ci, t]
template <typename T>
inline T conv1d_cell(const T* x, const T* w, int cin, int len, int ksize, int pad,
                     int co, int o) {
    T acc = T(0);
    const T* wbase = w + static_cast<long>(co) * cin * ksize;
    for (int ci = 0; ci < cin; ++ci) {
        const T* xrow = x + static_cast<long>(ci) * len;
        const T* wrow = wbase + static_cast<long>(ci) * ksize;
        for (int t = 0; t < ksize; ++t) {
            const int src = o - pad + t;
            if (src >= 0 && src < len) acc += xrow[src] * wrow[t];
        }
    }
    return acc;
}

// dx[ci, i] = sum_{co, t} dy[co, i + pad - t] * w[co, ci, t]
template <typename T>
inline T conv1d_dx_cell(const T* dy, const T* w, int cout, int cin, int lout, int ksize,
                        int pad, int ci, int i) {
    T acc = T(0);
    for (int co = 0; co < cout; ++co) {
        const T* dyrow = dy + static_cast<long>(co) * lout;
        const T* wrow = w + (static_cast<long>(co) * cin + ci) * ksize;
        for (int t = 0; t < ksize; ++t) {
            const int o = i + pad - t;
            if (o >= 0 && o < lout) acc += dyrow[o] * wrow[t];
        }
    }
    return acc;
}

// dw[co, ci, t] = sum_o dy[co, o] * x[ci, o - pad + t]
template <typename T>
inline T conv1d_dw_cell(const T* x, const T* dy, int len, int lout, int pad,
                        int ci, int co, int t) {
    T acc = T(0);
    const T* xrow = x + static_cast<long>(ci) * len;
    const T* dyrow = dy + static_cast<long>(co) * lout;
    for (int o = 0; o < lout; ++o) {
        const int src = o - pad + t;
        if (src >= 0 && src < len) acc += dyrow[o] * xrow[src];
    }
    return acc;
}

template <typename T>
inline void softmax_row(const T* x, T* y, int n) {
    T mx = x[0];
    for (int i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    T sum = T(0);
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
    }
    const T inv = T(1) / sum;
    for (int i = 0; i < n; ++i) y[i] *= inv;
}

// dx_i = y_i * (dy_i - sum_j dy_j y_j)
template <typename T>
inline void softmax_backward_row(const T* y, const T* dy, T* dx, int n) {
    T s = T(0);
    for (int i = 0; i < n; ++i) s += dy[i] * y[i];
    for (int i = 0; i < n; ++i) dx[i] += y[i] * (dy[i] - s);
}

template <typename T>
inline void layer_norm_row(const T* x, const T* gain, const T* bias, T* y, int n, T eps) {
    T mean = T(0);
    for (int i = 0; i < n; ++i) mean += x[i];
    mean /= T(n);
    T var = T(0);
    for (int i = 0; i < n; ++i) {
        const T d = x[i] - mean;
        var += d * d;
    }
    var /= T(n);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * gain[i] + bias[i];
}

// accumulates dx; dgain/dbias accumulation is done serially by the caller
template <typename T>
inline void layer_norm_backward_row(const T* x, const T* gain, const T* dy, T* dx, int n,
                                    T eps) {
    T mean = T(0);
    for (int i = 0; i < n; ++i) mean += x[i];
    mean /= T(n);
    T var = T(0);
    for (int i = 0; i < n; ++i) {
        const T d = x[i] - mean;
        var += d * d;
    }
    var /= T(n);
    const T inv = T(1) / std::sqrt(var + eps);
    T sum_dh = T(0), sum_dh_xhat = T(0);
    for (int i = 0; i < n; ++i) {
        const T xhat = (x[i] - mean) * inv;
        const T dh = dy[i] * gain[i];
        sum_dh += dh;
        sum_dh_xhat += dh * xhat;
    }
    for (int i = 0; i < n; ++i) {
        const T xhat = (x[i] - mean) * inv;
        const T dh = dy[i] * gain[i];
        dx[i] += inv * (dh - sum_dh / T(n) - xhat * sum_dh_xhat / T(n));
    }
}

template <typename T>
inline T gelu_cell(T x) {
    const T c = T(0.7978845608028654);  // sqrt(2/pi)
    const T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
inline T gelu_grad_cell(T x) {
    const T c = T(0.7978845608028654);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T th = std::tanh(u);
    const T sech2 = T(1) - th * th;
    return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * T(0.044715) * x * x);
}

}  // namespace detail

// ---------------------------------------------------------------- serial --

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        detail::matmul_row(a + static_cast<long>(i) * k, b, c + static_cast<long>(i) * n, k, n);
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        detail::matmul_nt_row(a + static_cast<long>(i) * k, b, c + static_cast<long>(i) * n, k, n);
}

// C[k x n] = A^T[k x m] * B[m x n] with A given as [m x k]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p)
        detail::matmul_tn_row(a + p, b, c + static_cast<long>(p) * n, m, n, k);
}

template <typename T>
void conv1d(const T* x, const T* w, T* y, int cin, int len, int cout, int ksize, int pad) {
    const int lout = len + 2 * pad - ksize + 1;
    for (int co = 0; co < cout; ++co)
        for (int o = 0; o < lout; ++o)
            y[static_cast<long>(co) * lout + o] = detail::conv1d_cell(x, w, cin, len, ksize, pad, co, o);
}

template <typename T>
void conv1d_dx(const T* dy, const T* w, T* dx, int cin, int len, int cout, int ksize, int pad) {
    const int lout = len + 2 * pad - ksize + 1;
    for (int ci = 0; ci < cin; ++ci)
        for (int i = 0; i < len; ++i)
            dx[static_cast<long>(ci) * len + i] +=
                detail::conv1d_dx_cell(dy, w, cout, cin, lout, ksize, pad, ci, i);
}

template <typename T>
void conv1d_dw(const T* x, const T* dy, T* dw, int cin, int len, int cout, int ksize, int pad) {
    const int lout = len + 2 * pad - ksize + 1;
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int t = 0; t < ksize; ++t)
                dw[(static_cast<long>(co) * cin + ci) * ksize + t] +=
                    detail::conv1d_dw_cell(x, dy, len, lout, pad, ci, co, t);
}

template <typename T>
void softmax_rows(const T* x, T* y, int rows, int n) {
    for (int r = 0; r < rows; ++r)
        detail::softmax_row(x + static_cast<long>(r) * n, y + static_cast<long>(r) * n, n);
}

template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int rows, int n) {
    for (int r = 0; r < rows; ++r)
        detail::softmax_backward_row(y + static_cast<long>(r) * n, dy + static_cast<long>(r) * n,
                                     dx + static_cast<long>(r) * n, n);
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, int rows, int n, T eps) {
    for (int r = 0; r < rows; ++r)
        detail::layer_norm_row(x + static_cast<long>(r) * n, gain, bias,
                               y + static_cast<long>(r) * n, n, eps);
}

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* dy, T* dx, int rows, int n,
                              T eps) {
    for (int r = 0; r < rows; ++r)
        detail::layer_norm_backward_row(x + static_cast<long>(r) * n, gain,
                                        dy + static_cast<long>(r) * n,
                                        dx + static_cast<long>(r) * n, n, eps);
}

template <typename T>
void gelu(const T* x, T* y, long n) {
    for (long i = 0; i < n; ++i) y[i] = detail::gelu_cell(x[i]);
}

template <typename T>
void gelu_backward(const T* x, const T* dy, T* dx, long n) {
    for (long i = 0; i < n; ++i) dx[i] += dy[i] * detail::gelu_grad_cell(x[i]);
}

}  // namespace serial

// -------------------------------------------------------------- parallel --

namespace par {

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        detail::matmul_row(a + static_cast<long>(i) * k, b, c + static_cast<long>(i) * n, k, n);
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        detail::matmul_nt_row(a + static_cast<long>(i) * k, b, c + static_cast<long>(i) * n, k, n);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < k; ++p)
        detail::matmul_tn_row(a + p, b, c + static_cast<long>(p) * n, m, n, k);
}

template <typename T>
void conv1d(const T* x, const T* w, T* y, int cin, int len, int cout, int ksize, int pad) {
    const int lout = len + 2 * pad - ksize + 1;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co)
        for (int o = 0; o < lout; ++o)
            y[static_cast<long>(co) * lout + o] = detail::conv1d_cell(x, w, cin, len, ksize, pad, co, o);
}

template <typename T>
void conv1d_dx(const T* dy, const T* w, T* dx, int cin, int len, int cout, int ksize, int pad) {
    const int lout = len + 2 * pad - ksize + 1;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci)
        for (int i = 0; i < len; ++i)
            dx[static_cast<long>(ci) * len + i] +=
                detail::conv1d_dx_cell(dy, w, cout, cin, lout, ksize, pad, ci, i);
}

template <typename T>
void conv1d_dw(const T* x, const T* dy, T* dw, int cin, int len, int cout, int ksize, int pad) {
    const int lout = len + 2 * pad - ksize + 1;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int t = 0; t < ksize; ++t)
                dw[(static_cast<long>(co) * cin + ci) * ksize + t] +=
                    detail::conv1d_dw_cell(x, dy, len, lout, pad, ci, co, t);
}

template <typename T>
void softmax_rows(const T* x, T* y, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        detail::softmax_row(x + static_cast<long>(r) * n, y + static_cast<long>(r) * n, n);
}

template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        detail::softmax_backward_row(y + static_cast<long>(r) * n, dy + static_cast<long>(r) * n,
                                     dx + static_cast<long>(r) * n, n);
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, int rows, int n, T eps) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        detail::layer_norm_row(x + static_cast<long>(r) * n, gain, bias,
                               y + static_cast<long>(r) * n, n, eps);
}

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* dy, T* dx, int rows, int n,
                              T eps) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        detail::layer_norm_backward_row(x + static_cast<long>(r) * n, gain,
                                        dy + static_cast<long>(r) * n,
                                        dx + static_cast<long>(r) * n, n, eps);
}

template <typename T>
void gelu(const T* x, T* y, long n) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) y[i] = detail::gelu_cell(x[i]);
}

template <typename T>
void gelu_backward(const T* x, const T* dy, T* dx, long n) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) dx[i] += dy[i] * detail::gelu_grad_cell(x[i]);
}

}  // namespace par

// Default dispatch used by the tensor ops. The parallel versions are safe at
// any thread count, so they are the default; serial stays as the reference.
using namespace par;

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace rfm::kernels
