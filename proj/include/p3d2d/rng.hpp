#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Deterministic draws on top of std::mt19937. The standard distributions are
// implementation-defined, so anything that must reproduce bit-for-bit across
// toolchains is derived from raw engine output here.

namespace p3d2d {

// Uniform in [0, 1) with 32-bit resolution.
inline double uniform_double(std::mt19937& rng) {
    return static_cast<double>(rng()) * (1.0 / 4294967296.0);
}

inline double uniform_range(std::mt19937& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_double(rng);
}

// Unbiased-enough integer in [0, n) via the multiply-shift trick.
inline std::uint32_t uniform_index(std::mt19937& rng, std::uint32_t n) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(rng()) * n) >> 32);
}

// Standard normal via Box-Muller (two engine draws per sample, no caching).
inline double normal_double(std::mt19937& rng) {
    double u1 = uniform_double(rng);
    double u2 = uniform_double(rng);
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Fisher-Yates with our own index draws.
template <typename V>
void shuffle_vec(V& v, std::mt19937& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, static_cast<std::uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

// First k elements of a random permutation of [0, n).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           std::mt19937& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
        std::size_t j = i + uniform_index(rng, static_cast<std::uint32_t>(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

// Decorrelated stream seeds for one master seed.
inline std::uint32_t derive_seed(std::uint32_t seed, std::uint32_t stream) {
    std::uint64_t z = (static_cast<std::uint64_t>(seed) << 32) | (stream + 0x9e3779b9u);
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ULL;
    z ^= z >> 33;
    return static_cast<std::uint32_t>(z);
}

}  // namespace p3d2d
