#pragma once

#include <cstdint>
#include <random>

namespace mena {

/// Derive an independent stream seed from a base seed and a salt.
/// splitmix64 finalizer; cheap and well mixed, so experiment sub-streams
/// (device, split, bias init, ...) never alias each other.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// One normal draw. A fresh distribution object per call keeps the engine
/// state the only carrier of randomness, so copied engines replay exactly.
/// Scaling a unit draw also makes sd == 0 a legal degenerate distribution.
inline double draw_normal(std::mt19937_64& eng, double mean, double sd) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return mean + sd * dist(eng);
}

inline double draw_uniform(std::mt19937_64& eng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(eng);
}

inline std::size_t draw_index(std::mt19937_64& eng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(eng);
}

}  // namespace mena
