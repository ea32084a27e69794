#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "gkp/error.hpp"
#include "gkp/random.hpp"

namespace gkp {

/// Indices of the nucleus: the smallest prefix of tokens, by descending
/// probability, whose mass reaches top_p. Tokens tied with the last one
/// admitted are admitted too, so the set does not depend on input order.
/// Result is ordered by descending probability, then index.
inline std::vector<std::size_t> nucleus_set(std::span<const double> probs, double top_p) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<std::size_t> kept;
  double mass = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double p = probs[order[i]];
    if (p <= 0.0) break;
    kept.push_back(order[i]);
    mass += p;
    if (mass >= top_p - 1e-12) {
      for (std::size_t j = i + 1; j < order.size() && probs[order[j]] == p; ++j)
        kept.push_back(order[j]);
      break;
    }
  }
  return kept;
}

/// Draws one index from `probs` after temperature reshaping and nucleus
/// truncation. temperature == 0 is greedy (lowest index among ties).
inline std::size_t sample_nucleus(std::span<const double> probs, double top_p, double temperature,
                                  Rng &rng) {
  if (probs.empty()) throw Error(ErrorCode::invalid_argument, "empty distribution");
  if (temperature == 0.0) {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
  std::vector<double> shaped(probs.begin(), probs.end());
  if (temperature != 1.0) {
    double z = 0.0;
    for (double &p : shaped) {
      p = p > 0.0 ? std::pow(p, 1.0 / temperature) : 0.0;
      z += p;
    }
    for (double &p : shaped) p /= z;
  }
  const auto kept = nucleus_set(shaped, top_p);
  if (kept.empty()) throw Error(ErrorCode::invalid_argument, "distribution has no mass");
  double total = 0.0;
  for (auto i : kept) total += shaped[i];
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (auto i : kept) {
    acc += shaped[i];
    if (u < acc) return i;
  }
  return kept.back();
}

} // namespace gkp
