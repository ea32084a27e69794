#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gkp/backends/enumerable.hpp"
#include "gkp/random.hpp"

namespace gkp {

/// Both sides of p(y|x) = sum_z p(z|x) p(y|x,z) for length-`z_length` z.
/// lhs sums the full-length paths ending in y; rhs weights the scored
/// continuation by each z. `immediate` scores y right after x, which is the
/// approximation the analysis makes when z is dropped.
struct ExpectationGap {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
  double immediate = 0.0;
  double immediate_gap = 0.0;
};

inline TokenIds require_ids(const EnumerableLM &lm, const std::vector<std::string> &tokens) {
  const auto ids = lm.strict_ids(tokens);
  if (!ids) throw Error(ErrorCode::invalid_argument, "token outside the vocabulary");
  return *ids;
}

inline ExpectationGap expectation_gap(const EnumerableLM &lm, const std::vector<std::string> &x,
                                      const std::vector<std::string> &y, std::size_t z_length) {
  if (y.empty()) throw Error(ErrorCode::invalid_argument, "target sequence is empty");
  const TokenIds xi = require_ids(lm, x);
  const TokenIds yi = require_ids(lm, y);
  check_enumeration_cap(lm.vocabulary_size(), z_length + yi.size());

  ExpectationGap r;
  for (const auto &[seq, p] : enumerate_ids(lm, xi, z_length + yi.size()))
    if (std::equal(yi.begin(), yi.end(), seq.end() - static_cast<std::ptrdiff_t>(yi.size()))) r.lhs += p;

  const auto zs = z_length == 0 ? std::vector<std::pair<TokenIds, double>>{{TokenIds{}, 1.0}}
                                : enumerate_ids(lm, xi, z_length);
  for (const auto &[z, pz] : zs) {
    TokenIds ctx = xi;
    ctx.insert(ctx.end(), z.begin(), z.end());
    r.rhs += pz * lm.sequence_probability(ctx, yi);
  }
  r.gap = std::abs(r.lhs - r.rhs);
  r.immediate = lm.sequence_probability(xi, yi);
  r.immediate_gap = std::abs(r.rhs - r.immediate);
  return r;
}

/// Output entropy with and without the augmentation block Z (length-ℓ
/// continuation of x, END-free paths renormalized), in bits. Y is the token
/// (or END) following the block.
struct EntropyReport {
  double h_y_given_x = 0.0;
  double h_y_given_zx = 0.0;
  double mutual_information = 0.0;
  double z_mass = 0.0;
};

inline double entropy_bits(const std::vector<double> &p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

inline EntropyReport entropy_report(const EnumerableLM &lm, const std::vector<std::string> &x,
                                    std::size_t z_length) {
  if (z_length == 0) throw Error(ErrorCode::invalid_argument, "z length must be positive");
  const TokenIds xi = require_ids(lm, x);
  const auto zs = enumerate_ids(lm, xi, z_length);
  EntropyReport r;
  for (const auto &[z, p] : zs) r.z_mass += p;
  if (r.z_mass <= 0.0) throw Error(ErrorCode::invalid_argument, "no length-ℓ path has mass");
  std::vector<double> marginal(lm.vocabulary_size() + 1, 0.0);
  for (const auto &[z, p] : zs) {
    if (p <= 0.0) continue;
    const double w = p / r.z_mass;
    TokenIds ctx = xi;
    ctx.insert(ctx.end(), z.begin(), z.end());
    const auto &dist = lm.distribution(ctx);
    for (std::size_t i = 0; i < dist.size(); ++i) marginal[i] += w * dist[i];
    r.h_y_given_zx += w * entropy_bits(dist);
  }
  r.h_y_given_x = entropy_bits(marginal);
  r.mutual_information = r.h_y_given_x - r.h_y_given_zx;
  return r;
}

/// Random toy LM for property checks: 2-5 tokens, context up to 2, random
/// END mass, and some contexts left out so backoff is exercised.
inline EnumerableLM random_enumerable_lm(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t V = 2 + static_cast<std::size_t>(uniform_below(rng, 4));
  const std::size_t depth = 1 + static_cast<std::size_t>(uniform_below(rng, 2));
  std::vector<std::string> vocab;
  for (std::size_t i = 0; i < V; ++i) vocab.push_back("t" + std::to_string(i));
  EnumerableLM lm(vocab, depth);
  auto random_dist = [&] {
    std::map<std::string, double> dist;
    std::vector<double> w(V + 1);
    double total = 0.0;
    for (std::size_t i = 0; i <= V; ++i) {
      w[i] = uniform01(rng) + 0.01;
      if (i == V && uniform_below(rng, 2) == 0) w[i] = 0.0;
      total += w[i];
    }
    for (std::size_t i = 0; i < V; ++i) dist[vocab[i]] = w[i] / total;
    double rest = 1.0;
    for (const auto &[_, p] : dist) rest -= p;
    dist[std::string(kEndToken)] = std::max(0.0, rest);
    return dist;
  };
  lm.set_distribution({}, random_dist());
  std::vector<std::vector<std::string>> frontier{{}};
  for (std::size_t d = 1; d <= depth; ++d) {
    std::vector<std::vector<std::string>> next;
    for (const auto &ctx : frontier)
      for (const auto &t : vocab) {
        auto c = ctx;
        c.push_back(t);
        next.push_back(c);
        if (uniform_below(rng, 5) != 0) lm.set_distribution(c, random_dist());
      }
    frontier = std::move(next);
  }
  return lm;
}

} // namespace gkp
