#pragma once

// Portable deterministic random helpers. The <random> distributions are
// implementation-defined, so everything that must reproduce bit-exactly
// across toolchains goes through these conversions on top of mt19937_64.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace geosr::rng {

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt));
}

// Uniform in [0, 1) with 53 bits of precision.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
    return lo + (hi - lo) * uniform01(gen);
}

// Box-Muller, consuming exactly two draws per call.
inline double standard_normal(std::mt19937_64& gen) {
    const double u1 = 1.0 - uniform01(gen);  // (0, 1]
    const double u2 = uniform01(gen);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace geosr::rng
