#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "rfm/kernels.hpp"
#include "rfm/rng.hpp"
#include "rfm/version.hpp"

// Wall-clock comparison of the serial reference kernels against the
// OpenMP-parallel defaults, at shapes near what the estimator actually
// runs. On a single core the parallel column should track the serial one;
// with more workers it should pull ahead on the row-parallel kernels.
using namespace rfm;

namespace {

struct Case {
    std::string name;
    std::function<void()> serial;
    std::function<void()> par;
};

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<float> randvec(long n, uint64_t seed) {
    std::vector<float> v(static_cast<size_t>(n));
    Rng rng(seed);
    rng.fill_normal(v.data(), n);
    return v;
}

}  // namespace

int main() {
    std::printf("kernel benchmark, %s\n", kVersion);
    std::printf("threads: %d\n\n", kernels::max_threads());

    const int m = 256, k = 256, n = 256;
    const int rows = 512, cols = 256;
    const int cin = 64, len = 256, cout = 64, ksize = 3, pad = 1;

    auto a = randvec(static_cast<long>(m) * k, 1);
    auto b = randvec(static_cast<long>(k) * n, 2);
    auto c = randvec(static_cast<long>(m) * n, 3);
    auto x = randvec(static_cast<long>(rows) * cols, 4);
    auto y = randvec(static_cast<long>(rows) * cols, 5);
    auto dx = randvec(static_cast<long>(rows) * cols, 6);
    auto gain = randvec(cols, 7);
    auto bias = randvec(cols, 8);
    auto cx = randvec(static_cast<long>(cin) * len, 9);
    auto cw = randvec(static_cast<long>(cout) * cin * ksize, 10);
    auto cy = randvec(static_cast<long>(cout) * len, 11);
    auto cdx = randvec(static_cast<long>(cin) * len, 12);
    auto cdw = randvec(static_cast<long>(cout) * cin * ksize, 13);

    const float* ap = a.data();
    const float* bp = b.data();
    float* cp = c.data();
    const float* xp = x.data();
    float* yp = y.data();
    float* dxp = dx.data();
    const float* gp = gain.data();
    const float* bip = bias.data();

    std::vector<Case> cases = {
        {"matmul 256x256x256",
         [&] { kernels::serial::matmul(ap, bp, cp, m, k, n); },
         [&] { kernels::par::matmul(ap, bp, cp, m, k, n); }},
        {"matmul_nt 256x256x256",
         [&] { kernels::serial::matmul_nt(ap, bp, cp, m, k, n); },
         [&] { kernels::par::matmul_nt(ap, bp, cp, m, k, n); }},
        {"matmul_tn 256x256x256",
         [&] { kernels::serial::matmul_tn(ap, bp, cp, m, k, n); },
         [&] { kernels::par::matmul_tn(ap, bp, cp, m, k, n); }},
        {"conv1d 64ch x 256",
         [&] { kernels::serial::conv1d(cx.data(), cw.data(), cy.data(), cin, len, cout, ksize, pad); },
         [&] { kernels::par::conv1d(cx.data(), cw.data(), cy.data(), cin, len, cout, ksize, pad); }},
        {"conv1d_dx 64ch x 256",
         [&] { kernels::serial::conv1d_dx(cy.data(), cw.data(), cdx.data(), cin, len, cout, ksize, pad); },
         [&] { kernels::par::conv1d_dx(cy.data(), cw.data(), cdx.data(), cin, len, cout, ksize, pad); }},
        {"conv1d_dw 64ch x 256",
         [&] { kernels::serial::conv1d_dw(cx.data(), cy.data(), cdw.data(), cin, len, cout, ksize, pad); },
         [&] { kernels::par::conv1d_dw(cx.data(), cy.data(), cdw.data(), cin, len, cout, ksize, pad); }},
        {"softmax_rows 512x256",
         [&] { kernels::serial::softmax_rows(xp, yp, rows, cols); },
         [&] { kernels::par::softmax_rows(xp, yp, rows, cols); }},
        {"layer_norm_rows 512x256",
         [&] { kernels::serial::layer_norm_rows(xp, gp, bip, yp, rows, cols, 1e-5f); },
         [&] { kernels::par::layer_norm_rows(xp, gp, bip, yp, rows, cols, 1e-5f); }},
        {"gelu 512x256",
         [&] { kernels::serial::gelu(xp, yp, static_cast<long>(rows) * cols); },
         [&] { kernels::par::gelu(xp, yp, static_cast<long>(rows) * cols); }},
        {"gelu_backward 512x256",
         [&] { kernels::serial::gelu_backward(xp, yp, dxp, static_cast<long>(rows) * cols); },
         [&] { kernels::par::gelu_backward(xp, yp, dxp, static_cast<long>(rows) * cols); }},
    };

    std::printf("%-26s %12s %12s %9s\n", "kernel", "serial ms", "parallel ms", "speedup");
    for (const Case& cs : cases) {
        const double s = time_ms(cs.serial, 5);
        const double p = time_ms(cs.par, 5);
        std::printf("%-26s %12.3f %12.3f %8.2fx\n", cs.name.c_str(), s, p, p > 0.0 ? s / p : 0.0);
    }
    return 0;
}
