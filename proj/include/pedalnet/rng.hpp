#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace pedalnet {

// Thin wrapper over std::mt19937_64 that avoids std::*_distribution.
// The raw engine output is pinned by the standard; the distributions are
// implementation-defined, which would break run-to-run reproducibility
// across toolchains. All sampling in the library goes through this.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). Rejection-free modulo is fine here; the
    // bias at n << 2^64 is far below anything observable.
    std::uint64_t next_below(std::uint64_t n) { return engine_() % n; }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Gaussian via Box-Muller (polar form would consume a data-dependent
    // number of draws; the trig form keeps the stream position fixed).
    double gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream, e.g. one per synthesized note or pair.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace pedalnet
