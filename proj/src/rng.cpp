#include "rfm/rng.hpp"

#include <cmath>

namespace rfm {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

void Rng::fill_normal(float* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = static_cast<float>(normal());
}

void Rng::fill_normal(double* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = normal();
}

}  // namespace rfm
