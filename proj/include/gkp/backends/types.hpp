#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gkp/digest.hpp"
#include "gkp/error.hpp"
#include "gkp/jsonl.hpp"

namespace gkp {

struct SamplingParams {
  int max_tokens = 64;
  double top_p = 1.0;
  double temperature = 1.0;
  std::vector<std::string> stop_sequences{"\n"};
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (max_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_tokens must be >= 1");
    if (!(top_p > 0.0 && top_p <= 1.0))
      throw Error(ErrorCode::invalid_argument, "top_p must be in (0, 1]");
    if (!(temperature >= 0.0) || !std::isfinite(temperature))
      throw Error(ErrorCode::invalid_argument, "temperature must be a nonnegative real");
    for (const auto &s : stop_sequences)
      if (s.empty()) throw Error(ErrorCode::invalid_argument, "empty stop sequence");
  }

  Json to_json() const {
    Json j{{"max_tokens", max_tokens},
           {"top_p", top_p},
           {"temperature", temperature},
           {"stop", stop_sequences}};
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    return j;
  }

  static SamplingParams from_json(const Json &j) {
    SamplingParams p;
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.top_p = j.value("top_p", p.top_p);
    p.temperature = j.value("temperature", p.temperature);
    if (j.contains("stop")) p.stop_sequences = j.at("stop").get<std::vector<std::string>>();
    if (j.contains("seed") && !j.at("seed").is_null()) p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
  }

  std::string digest() const { return sha256_hex(to_json().dump()); }
};

enum class FinishReason { stop, length };

inline std::string_view to_string(FinishReason r) {
  return r == FinishReason::stop ? "stop" : "length";
}

struct Completion {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  int token_count = 0;

  Json to_json() const {
    return {{"text", text}, {"finish_reason", to_string(finish_reason)}, {"token_count", token_count}};
  }
  static Completion from_json(const Json &j) {
    return {j.at("text").get<std::string>(),
            j.at("finish_reason").get<std::string>() == "length" ? FinishReason::length
                                                                  : FinishReason::stop,
            j.at("token_count").get<int>()};
  }
  bool operator==(const Completion &) const = default;
};

struct TokenScore {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenScore &) const = default;
};

inline Json to_json(const std::vector<TokenScore> &scores) {
  Json arr = Json::array();
  for (const auto &s : scores) arr.push_back({{"token", s.token}, {"logprob", s.logprob}});
  return arr;
}

inline std::vector<TokenScore> token_scores_from_json(const Json &j) {
  std::vector<TokenScore> out;
  for (const auto &e : j) out.push_back({e.at("token").get<std::string>(), e.at("logprob").get<double>()});
  return out;
}

inline double sum_logprobs(const std::vector<TokenScore> &scores) {
  double s = 0.0;
  for (const auto &t : scores) s += t.logprob;
  return s;
}

enum class BackendKind { wire, fixture, enumerable };

inline std::string_view to_string(BackendKind k) {
  switch (k) {
  case BackendKind::wire: return "wire";
  case BackendKind::fixture: return "fixture";
  case BackendKind::enumerable: return "enumerable";
  }
  return "unknown";
}

inline BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "wire") return BackendKind::wire;
  if (s == "fixture") return BackendKind::fixture;
  if (s == "enumerable") return BackendKind::enumerable;
  throw Error(ErrorCode::config, "unknown backend kind '" + std::string(s) + "'");
}

struct BackendDescriptor {
  std::string id;
  BackendKind kind = BackendKind::fixture;
  std::string model_label;

  Json to_json() const { return {{"id", id}, {"kind", to_string(kind)}, {"model", model_label}}; }
};

/// One generation call. `params.seed` is the run seed; the seed a backend
/// actually samples with is derived from it and the request digest, so the
/// result does not depend on call order or concurrency.
struct GenerateRequest {
  std::string prompt;
  SamplingParams params;
  std::size_t sample_index = 0;

  /// Payload without the seed; identifies "what was asked".
  Json payload() const {
    Json p = params.to_json();
    p.erase("seed");
    return {{"op", "generate"}, {"prompt", prompt}, {"params", p}, {"sample_index", sample_index}};
  }
  std::string digest() const { return sha256_hex(payload().dump()); }
  std::uint64_t request_seed() const {
    return sha256_u64(std::to_string(params.seed.value_or(0)) + ":" + digest());
  }
};

struct ScoreRequest {
  std::string prefix;
  std::string continuation;

  Json payload() const {
    return {{"op", "score"}, {"prefix", prefix}, {"continuation", continuation}};
  }
  std::string digest() const { return sha256_hex(payload().dump()); }
};

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string> &parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Applies the stop and length rules to raw text under whitespace
/// tokenization: cut before the earliest stop sequence, then cap the word
/// count at max_tokens.
inline Completion finalize_completion(std::string_view raw, const SamplingParams &params) {
  std::size_t cut = raw.size();
  for (const auto &stop : params.stop_sequences) {
    const auto pos = raw.find(stop);
    if (pos != std::string_view::npos && pos < cut) cut = pos;
  }
  std::string text(raw.substr(0, cut));
  auto words = split_whitespace(text);
  if (static_cast<int>(words.size()) > params.max_tokens) {
    words.resize(static_cast<std::size_t>(params.max_tokens));
    return {join(words), FinishReason::length, params.max_tokens};
  }
  return {std::move(text), FinishReason::stop, static_cast<int>(words.size())};
}

} // namespace gkp
