#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mwalk {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent sub-seeds derived from one master seed by (stream, counter).
enum class SeedStream : std::uint64_t { Data = 1, Init = 2, Rollout = 3, Eval = 4 };

inline std::uint64_t derive_seed(std::uint64_t master, SeedStream stream, std::uint64_t counter = 0) {
    return splitmix64(splitmix64(master ^ (static_cast<std::uint64_t>(stream) << 56)) + counter);
}

using Rng = std::mt19937_64;

/// Unbiased integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % n;
}

/// Real in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class V>
void shuffle(V& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace mwalk
