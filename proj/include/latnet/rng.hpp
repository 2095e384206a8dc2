#pragma once

#include <cmath>
#include <cstdint>

namespace latnet {

// Deterministic SplitMix64 generator (Steele, Lea & Flood, "Fast splittable
// pseudorandom number generators"). The entire stream is a pure function of
// the 64-bit seed, so identical seeds give identical samples on every
// platform. Streams are single-owner; derive independent streams for
// concurrent or logically separate consumers with split().
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes exactly two uniforms per call.
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift rejection-free mapping; bias is < 2^-64 * n which is
        // irrelevant for the n used here (shuffles, layer pools).
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Independent child stream identified by `key`. Children with distinct
    // keys from the same parent state never correlate, and splitting does not
    // advance the parent.
    Rng split(std::uint64_t key) const {
        std::uint64_t z = state_ ^ (0xD1B54A32D192ED03ULL * (key + 1));
        z = (z ^ (z >> 29)) * 0xFF51AFD7ED558CCDULL;
        z = (z ^ (z >> 32)) * 0xC4CEB9FE1A85EC53ULL;
        return Rng(z ^ (z >> 29));
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace latnet
