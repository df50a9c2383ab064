#pragma once

#include <complex>
#include <cstdint>
#include <cmath>

namespace tlgamp {

/// Counter-free splitmix64 PRNG.
///
/// All randomness in the library flows through this generator so that a run
/// is reproducible bit-for-bit from its seed, independent of platform or
/// standard-library version (std::*_distribution is implementation-defined,
/// so it is not used anywhere).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return n ? next_u64() % n : 0; }

    /// Standard real Gaussian N(0, 1) via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Circularly symmetric complex Gaussian CN(0, 1): E|x|^2 = 1.
    std::complex<double> cgaussian() {
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-std::log(u1));
        const double a = 6.283185307179586476925286766559 * uniform();
        return {r * std::cos(a), r * std::sin(a)};
    }

    /// Fair coin.
    bool flip() { return (next_u64() & 1ull) != 0; }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Order-sensitive seed mixing, used to derive independent per-trial and
/// per-purpose streams from one base seed.
inline std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return hash_seed(hash_seed(a, b), c);
}

} // namespace tlgamp
