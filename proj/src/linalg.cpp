#include "rfm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rfm/errors.hpp"

namespace rfm::linalg {

EigenSym jacobi_eigen_symmetric(const std::vector<double>& a, int n) {
    if (n < 1) throw UsageError("jacobi: dimension must be positive");
    if (n > 16)
        throw CapacityError("jacobi: dimension " + std::to_string(n) + " exceeds the supported 16");
    if (a.size() != static_cast<size_t>(n) * n)
        throw ShapeError("jacobi: matrix storage does not match dimension " + std::to_string(n));
    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            asym = std::max(asym, std::abs(a[i * n + j] - a[j * n + i]));
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    if (asym > 1e-6 * std::max(1.0, scale))
        throw UsageError("jacobi: matrix is not symmetric within 1e-6");

    // work on the symmetrized copy so tiny input asymmetry cannot bias a side
    std::vector<double> m(a.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
    std::vector<double> q(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) q[i * n + i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += m[i * n + j] * m[i * n + j];
        if (off <= 1e-28 * std::max(1.0, scale * scale)) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apr = m[p * n + r];
                if (apr == 0.0) continue;
                const double app = m[p * n + p];
                const double arr = m[r * n + r];
                const double tau = (arr - app) / (2.0 * apr);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double mkp = m[k * n + p];
                    const double mkr = m[k * n + r];
                    m[k * n + p] = c * mkp - s * mkr;
                    m[k * n + r] = s * mkp + c * mkr;
                }
                for (int k = 0; k < n; ++k) {
                    const double mpk = m[p * n + k];
                    const double mrk = m[r * n + k];
                    m[p * n + k] = c * mpk - s * mrk;
                    m[r * n + k] = s * mpk + c * mrk;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q[k * n + p];
                    const double qkr = q[k * n + r];
                    q[k * n + p] = c * qkp - s * qkr;
                    q[k * n + r] = s * qkp + c * qkr;
                }
            }
        }
    }

    EigenSym out;
    out.values.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.values[static_cast<size_t>(i)] = m[i * n + i];
    // sort ascending, permuting the eigenvector columns alongside
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return out.values[static_cast<size_t>(x)] <
                                                out.values[static_cast<size_t>(y)]; });
    EigenSym sorted;
    sorted.values.resize(static_cast<size_t>(n));
    sorted.vectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        sorted.values[static_cast<size_t>(j)] = out.values[static_cast<size_t>(order[j])];
        for (int i = 0; i < n; ++i) sorted.vectors[i * n + j] = q[i * n + order[j]];
    }
    return sorted;
}

std::vector<double> matmul_square(const std::vector<double>& a, const std::vector<double>& b,
                                  int n) {
    std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a[i * n + k];
            for (int j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
        }
    return c;
}

std::vector<double> sqrt_psd(const std::vector<double>& a, int n) {
    EigenSym eig = jacobi_eigen_symmetric(a, n);
    for (double& v : eig.values) {
        if (v < -1e-8)
            throw NumericError("matrix square root: eigenvalue " + std::to_string(v) +
                               " is negative beyond tolerance");
        if (v < 0.0) v = 0.0;
    }
    // Q sqrt(L) Q^T
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k)
                acc += eig.vectors[i * n + k] * std::sqrt(eig.values[static_cast<size_t>(k)]) *
                       eig.vectors[j * n + k];
            out[i * n + j] = acc;
        }
    return out;
}

}  // namespace rfm::linalg
