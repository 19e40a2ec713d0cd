#pragma once

#include <cstdint>
#include <random>

namespace wbc {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double stddev) {
  return std::normal_distribution<double>(0.0, stddev)(rng);
}

/// Independent stream derived from a base seed and a stream tag.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace wbc
