#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace selfcert {

// All randomness in the toolkit flows through mt19937_64 plus the helpers
// below. The standard pins the mt19937_64 sequence, and these conversions
// avoid std::*_distribution, whose output is implementation-defined; with
// that, equal seeds give equal draws on every platform.

inline uint64_t fnv1a64(const void * data, size_t len, uint64_t h = 1469598103934665603ull) {
    const auto * p = static_cast<const unsigned char *>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 1469598103934665603ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t fnv1a64_u64(uint64_t v, uint64_t h) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    return fnv1a64(bytes, 8, h);
}

// Subset seed for one (question, N, trial) cell of the evaluation grid.
inline uint64_t derive_subset_seed(uint64_t master_seed, std::string_view question_id, int n, int trial) {
    uint64_t h = fnv1a64_u64(master_seed, 1469598103934665603ull);
    h = fnv1a64(question_id, h);
    h = fnv1a64_u64(static_cast<uint64_t>(n), h);
    h = fnv1a64_u64(static_cast<uint64_t>(trial), h);
    return h;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_double(std::mt19937_64 & rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n); rejection sampling.
inline uint64_t uniform_below(std::mt19937_64 & rng, uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = rng();
    while (v >= limit) {
        v = rng();
    }
    return v % n;
}

// Standard normal draw via Box-Muller; consumes two uniforms per call.
inline double gaussian(std::mt19937_64 & rng) {
    double u1 = uniform_double(rng);
    while (u1 <= 0.0) {
        u1 = uniform_double(rng);
    }
    const double u2 = uniform_double(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace selfcert
