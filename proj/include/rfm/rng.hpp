#pragma once

#include <cstdint>
#include <vector>

namespace rfm {

// Purpose tags keep substreams for different uses of the same (seed, step)
// statistically independent and individually reproducible.
enum class Stream : uint64_t {
    DataGen     = 0x01,
    BatchSelect = 0x02,
    Noise       = 0x03,
    Time        = 0x04,
    CondDrop    = 0x05,
    ParamInit   = 0x06,
    ReflowNoise = 0x07,
    Eval        = 0x08,
};

// Counter-based generator: state is a hash of (seed, stream, indices...) and
// each draw advances a counter through the splitmix64 finalizer. Draw order
// within a substream is fixed; substreams never overlap in practice.
class Rng {
public:
    explicit Rng(uint64_t seed) : key_(mix(seed)) {}

    // Derived substream: fold the purpose tag and any number of indices.
    Rng fork(Stream purpose, uint64_t a = 0, uint64_t b = 0) const {
        uint64_t k = key_;
        k = mix(k ^ (0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(purpose)));
        k = mix(k ^ (0xbf58476d1ce4e5b9ULL + a));
        k = mix(k ^ (0x94d049bb133111ebULL + b));
        return Rng(FromKey{}, k);
    }

    uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (lo, hi): the open lower end matters for time sampling
    double uniform_open(double lo, double hi) {
        double u;
        do {
            u = next_double();
        } while (u == 0.0);
        return lo + u * (hi - lo);
    }

    // standard normal via Box-Muller; pairs cached
    double normal();

    void fill_normal(float* out, long n);
    void fill_normal(double* out, long n);

    // true with probability p
    bool bernoulli(double p) { return next_double() < p; }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    struct FromKey {};
    Rng(FromKey, uint64_t key) : key_(key) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rfm
