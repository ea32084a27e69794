#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gkp/backends/backend.hpp"
#include "gkp/backends/sampling.hpp"

namespace gkp {

inline constexpr std::string_view kEndToken = "<END>";
inline constexpr std::size_t kMaxVocabulary = 16;
inline constexpr std::size_t kMaxContext = 4;
inline constexpr double kEnumerationCap = 1e6;

using TokenIds = std::vector<int>;

/// A language model given by an explicit conditional table over a small
/// vocabulary plus END. Contexts longer than max_context, or missing from the
/// table, back off to their longest suffix that has an entry; the empty
/// context is mandatory.
class EnumerableLM {
public:
  explicit EnumerableLM(std::vector<std::string> vocabulary, std::size_t max_context = kMaxContext)
      : vocabulary_(std::move(vocabulary)), max_context_(max_context) {
    if (vocabulary_.empty() || vocabulary_.size() > kMaxVocabulary)
      throw Error(ErrorCode::invalid_argument, "vocabulary size must be in [1, 16]");
    if (max_context_ > kMaxContext)
      throw Error(ErrorCode::invalid_argument, "context length must be <= 4");
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
      const auto &t = vocabulary_[i];
      if (t.empty() || t == kEndToken || split_whitespace(t).size() != 1 || split_whitespace(t)[0] != t)
        throw Error(ErrorCode::invalid_argument, "bad vocabulary token '" + t + "'");
      if (!ids_.emplace(t, static_cast<int>(i)).second)
        throw Error(ErrorCode::invalid_argument, "duplicate vocabulary token '" + t + "'");
    }
  }

  const std::vector<std::string> &vocabulary() const { return vocabulary_; }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  std::size_t max_context() const { return max_context_; }
  int end_id() const { return static_cast<int>(vocabulary_.size()); }

  std::optional<int> token_id(std::string_view token) const {
    if (token == kEndToken) return end_id();
    const auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string &token(int id) const {
    static const std::string end(kEndToken);
    return id == end_id() ? end : vocabulary_.at(static_cast<std::size_t>(id));
  }

  /// Sets p(. | context). `dist` maps tokens (and "<END>") to probabilities;
  /// unlisted tokens get 0.
  void set_distribution(const std::vector<std::string> &context,
                        const std::map<std::string, double> &dist) {
    if (context.size() > max_context_)
      throw Error(ErrorCode::invalid_argument, "context longer than max_context");
    TokenIds ctx;
    for (const auto &t : context) {
      const auto id = token_id(t);
      if (!id || *id == end_id()) throw Error(ErrorCode::invalid_argument, "bad context token '" + t + "'");
      ctx.push_back(*id);
    }
    std::vector<double> probs(vocabulary_.size() + 1, 0.0);
    double total = 0.0;
    for (const auto &[t, p] : dist) {
      const auto id = token_id(t);
      if (!id) throw Error(ErrorCode::invalid_argument, "unknown token '" + t + "'");
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::invalid_argument, "probability outside [0,1]");
      probs[static_cast<std::size_t>(*id)] = p;
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error(ErrorCode::invalid_argument, "distribution sums to " + std::to_string(total));
    table_[ctx] = std::move(probs);
  }

  /// p(. | context) over vocabulary ids followed by END.
  const std::vector<double> &distribution(const TokenIds &context) const {
    const std::size_t longest = std::min(context.size(), max_context_);
    for (std::size_t len = longest + 1; len-- > 0;) {
      const TokenIds suffix(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
      const auto it = table_.find(suffix);
      if (it != table_.end()) return it->second;
    }
    throw Error(ErrorCode::invalid_argument, "enumerable LM has no root distribution");
  }

  double probability(const TokenIds &context, int next) const {
    return distribution(context)[static_cast<std::size_t>(next)];
  }

  /// Chain-rule probability of `continuation` following `context`.
  double sequence_probability(TokenIds context, const TokenIds &continuation) const {
    double p = 1.0;
    for (int id : continuation) {
      p *= probability(context, id);
      context.push_back(id);
    }
    return p;
  }

  /// Maps words to ids. Unknown words reset the context: only the ids after
  /// the last unknown word are returned.
  TokenIds context_ids(std::string_view text) const {
    TokenIds ids;
    for (const auto &w : split_whitespace(text)) {
      const auto id = token_id(w);
      if (!id || *id == end_id())
        ids.clear();
      else
        ids.push_back(*id);
    }
    return ids;
  }

  std::optional<TokenIds> strict_ids(const std::vector<std::string> &tokens) const {
    TokenIds ids;
    for (const auto &w : tokens) {
      const auto id = token_id(w);
      if (!id || *id == end_id()) return std::nullopt;
      ids.push_back(*id);
    }
    return ids;
  }

  /// Every distribution sums to 1 within 1e-12 and the root exists.
  void validate() const {
    if (!table_.contains(TokenIds{}))
      throw Error(ErrorCode::invalid_argument, "enumerable LM has no root distribution");
    for (const auto &[ctx, probs] : table_) {
      double total = 0.0;
      for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::invalid_argument, "probability outside [0,1]");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::invalid_argument, "distribution does not sum to 1");
    }
  }

  const std::map<TokenIds, std::vector<double>> &table() const { return table_; }

  /// {"vocabulary": [...], "max_context": n,
  ///  "table": [{"context": [...], "dist": {"tok": p, "<END>": p}}]}
  static EnumerableLM from_json(const Json &j) {
    EnumerableLM lm(j.at("vocabulary").get<std::vector<std::string>>(),
                    j.value("max_context", kMaxContext));
    for (const auto &e : j.at("table"))
      lm.set_distribution(e.value("context", std::vector<std::string>{}),
                          e.at("dist").get<std::map<std::string, double>>());
    lm.validate();
    return lm;
  }

  Json to_json() const {
    Json table = Json::array();
    for (const auto &[ctx, probs] : table_) {
      std::vector<std::string> words;
      for (int id : ctx) words.push_back(token(id));
      Json dist = Json::object();
      for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i] > 0.0) dist[token(static_cast<int>(i))] = probs[i];
      table.push_back({{"context", words}, {"dist", dist}});
    }
    return {{"vocabulary", vocabulary_}, {"max_context", max_context_}, {"table", table}};
  }

private:
  std::vector<std::string> vocabulary_;
  std::size_t max_context_;
  std::map<std::string, int> ids_;
  std::map<TokenIds, std::vector<double>> table_;
};

inline void check_enumeration_cap(std::size_t vocabulary_size, std::size_t length) {
  if (std::pow(static_cast<double>(vocabulary_size), static_cast<double>(length)) > kEnumerationCap)
    throw Error(ErrorCode::enumeration_cap_exceeded,
                std::to_string(vocabulary_size) + "^" + std::to_string(length) + " sequences exceed 10^6");
}

/// All length-`length` END-free continuations of `prefix` with their chain
/// rule probabilities, zero-probability sequences included.
inline std::vector<std::pair<TokenIds, double>> enumerate_ids(const EnumerableLM &lm,
                                                              const TokenIds &prefix,
                                                              std::size_t length) {
  check_enumeration_cap(lm.vocabulary_size(), length);
  std::vector<std::pair<TokenIds, double>> out;
  TokenIds seq;
  const int vocab = static_cast<int>(lm.vocabulary_size());
  auto walk = [&](auto &&self, TokenIds &context, double p) -> void {
    if (seq.size() == length) {
      out.emplace_back(seq, p);
      return;
    }
    const auto &dist = lm.distribution(context);
    for (int id = 0; id < vocab; ++id) {
      seq.push_back(id);
      context.push_back(id);
      self(self, context, p * dist[static_cast<std::size_t>(id)]);
      context.pop_back();
      seq.pop_back();
    }
  };
  TokenIds context = prefix;
  walk(walk, context, 1.0);
  return out;
}

inline std::map<std::vector<std::string>, double>
enumerate_continuations(const EnumerableLM &lm, const std::vector<std::string> &prefix,
                        std::size_t length) {
  if (length == 0) throw Error(ErrorCode::invalid_argument, "length must be positive");
  check_enumeration_cap(lm.vocabulary_size(), length);
  const auto ids = lm.strict_ids(prefix);
  if (!ids) throw Error(ErrorCode::invalid_argument, "prefix token outside vocabulary");
  std::map<std::vector<std::string>, double> out;
  for (const auto &[seq, p] : enumerate_ids(lm, *ids, length)) {
    std::vector<std::string> words;
    for (int id : seq) words.push_back(lm.token(id));
    out.emplace(std::move(words), p);
  }
  return out;
}

/// Backend over an EnumerableLM with whitespace tokenization.
class EnumerableBackend final : public Backend {
public:
  EnumerableBackend(BackendDescriptor descriptor, std::shared_ptr<const EnumerableLM> lm)
      : descriptor_(std::move(descriptor)), lm_(std::move(lm)) {
    descriptor_.kind = BackendKind::enumerable;
    lm_->validate();
  }

  const BackendDescriptor &descriptor() const override { return descriptor_; }
  const EnumerableLM &lm() const { return *lm_; }

  Completion generate(const GenerateRequest &request) override {
    const auto &params = request.params;
    Rng rng(request.request_seed());
    TokenIds context = lm_->context_ids(request.prompt);
    std::vector<std::string> words;
    for (int step = 0; step < params.max_tokens; ++step) {
      const auto &dist = lm_->distribution(context);
      const auto id = static_cast<int>(sample_nucleus(dist, params.top_p, params.temperature, rng));
      if (id == lm_->end_id()) return finalize_completion(join(words), params);
      words.push_back(lm_->token(id));
      context.push_back(id);
      const std::string text = join(words);
      for (const auto &stop : params.stop_sequences)
        if (text.find(stop) != std::string::npos) return finalize_completion(text, params);
    }
    return {join(words), FinishReason::length, params.max_tokens};
  }

  std::vector<TokenScore> score_continuation(const ScoreRequest &request) override {
    const auto words = split_whitespace(request.continuation);
    if (words.empty()) throw Error(ErrorCode::empty_continuation, "continuation is empty");
    const auto ids = lm_->strict_ids(words);
    if (!ids)
      throw Error(ErrorCode::unscorable_continuation,
                  "continuation has tokens outside the vocabulary: '" + request.continuation + "'");
    TokenIds context = lm_->context_ids(request.prefix);
    std::vector<TokenScore> out;
    for (std::size_t i = 0; i < ids->size(); ++i) {
      const double p = lm_->probability(context, (*ids)[i]);
      if (p <= 0.0)
        throw Error(ErrorCode::unscorable_continuation, "token '" + words[i] + "' has probability 0");
      out.push_back({words[i], std::log(p)});
      context.push_back((*ids)[i]);
    }
    return out;
  }

private:
  BackendDescriptor descriptor_;
  std::shared_ptr<const EnumerableLM> lm_;
};

} // namespace gkp
