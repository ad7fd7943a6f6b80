#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "kpose/geom.hpp"

namespace kpose {

// Seeded randomness helpers. mt19937_64 has a standardized output sequence,
// and the value derivations below are fixed here, so every draw is
// reproducible bit-for-bit across platforms. std::*_distribution is
// deliberately avoided (its output is implementation-defined).

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53-bit resolution.
inline double uniform01(Rng& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

/// Uniform integer in [0, n). Modulo bias is immaterial at the counts used here.
inline std::size_t uniform_index(Rng& g, std::size_t n) {
    return static_cast<std::size_t>(g() % n);
}

/// Standard normal via Box-Muller (always consumes exactly two draws).
inline double normal01(Rng& g) {
    double u1 = uniform01(g);
    const double u2 = uniform01(g);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace kpose
