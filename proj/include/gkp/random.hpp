#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gkp/digest.hpp"

namespace gkp {

// std::mt19937_64 output is fully specified by the standard; the draws below
// avoid std::*_distribution so results match across standard libraries.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound), bound > 0, rejection-sampled.
inline std::uint64_t uniform_below(Rng &rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

template <typename T> void shuffle(std::vector<T> &items, Rng &rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Per-purpose seed derived from a run seed and a label.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view purpose) {
  return sha256_u64(std::to_string(run_seed) + "/" + std::string(purpose));
}

} // namespace gkp
