#pragma once

#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gkp/backends/backend.hpp"

namespace gkp {

/// Scripted generations (selected by sample index) or scripted token scores.
using FixtureResponse = std::variant<std::vector<std::string>, std::vector<TokenScore>>;
using FixtureScript = std::vector<std::pair<std::string, FixtureResponse>>;

inline std::string generation_digest(std::string_view prompt) {
  return sha256_hex(Json{{"op", "generate"}, {"prompt", prompt}}.dump());
}

inline std::string scoring_digest(std::string_view prefix, std::string_view continuation) {
  return ScoreRequest{std::string(prefix), std::string(continuation)}.digest();
}

/// Replays scripted responses. A generation entry with a single text answers
/// every sample index; longer lists are indexed by sample index.
class FixtureBackend final : public Backend {
public:
  explicit FixtureBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    descriptor_.kind = BackendKind::fixture;
  }

  const BackendDescriptor &descriptor() const override { return descriptor_; }

  void register_script(const FixtureScript &script) {
    std::unique_lock lock(mutex_);
    std::map<std::string, FixtureResponse> staged;
    for (const auto &[digest, response] : script) {
      if (entries_.contains(digest) || !staged.emplace(digest, response).second)
        throw Error(ErrorCode::duplicate_digest, digest);
    }
    entries_.merge(staged);
  }

  Completion generate(const GenerateRequest &request) override {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(generation_digest(request.prompt));
    const auto *texts = it == entries_.end() ? nullptr : std::get_if<0>(&it->second);
    if (!texts || texts->empty())
      throw Error(ErrorCode::fixture_miss, "no generation scripted for prompt '" +
                                               request.prompt.substr(0, 60) + "'");
    if (texts->size() == 1) return finalize_completion(texts->front(), request.params);
    if (request.sample_index >= texts->size())
      throw Error(ErrorCode::fixture_miss, "sample index " + std::to_string(request.sample_index) +
                                               " beyond scripted samples");
    return finalize_completion((*texts)[request.sample_index], request.params);
  }

  std::vector<TokenScore> score_continuation(const ScoreRequest &request) override {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(request.digest());
    const auto *scores = it == entries_.end() ? nullptr : std::get_if<1>(&it->second);
    if (!scores)
      throw Error(ErrorCode::fixture_miss, "no scores scripted for continuation '" +
                                               request.continuation + "'");
    return *scores;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

private:
  BackendDescriptor descriptor_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, FixtureResponse> entries_;
};

/// Registers a script on a fixture backend.
inline void register_fixture(Backend &backend, const FixtureScript &script) {
  auto *fixture = dynamic_cast<FixtureBackend *>(&backend);
  if (backend.descriptor().kind != BackendKind::fixture || !fixture)
    throw Error(ErrorCode::wrong_backend_kind,
                "backend '" + backend.descriptor().id + "' is not a fixture backend");
  fixture->register_script(script);
}

/// Token scores for a scripted continuation. Tokens default to the
/// continuation's words when the counts line up, else to indexed labels.
inline std::vector<TokenScore> scripted_scores(std::string_view continuation,
                                               const std::vector<double> &logprobs) {
  const auto words = split_whitespace(continuation);
  std::vector<TokenScore> out;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    std::string token = words.size() == logprobs.size()
                            ? words[i]
                            : std::string(continuation) + "#" + std::to_string(i);
    out.push_back({std::move(token), logprobs[i]});
  }
  return out;
}

/// Fixture script file:
///   {"generate": [{"prompt": P, "texts": [...]}, ...],
///    "score":    [{"prefix": P, "continuation": C, "logprobs": [...], "tokens"?: [...]}, ...]}
inline FixtureScript fixture_script_from_json(const Json &j) {
  FixtureScript script;
  if (j.contains("generate"))
    for (const auto &e : j.at("generate"))
      script.emplace_back(generation_digest(e.at("prompt").get<std::string>()),
                          e.at("texts").get<std::vector<std::string>>());
  if (j.contains("score")) {
    for (const auto &e : j.at("score")) {
      const auto prefix = e.at("prefix").get<std::string>();
      const auto cont = e.at("continuation").get<std::string>();
      const auto logprobs = e.at("logprobs").get<std::vector<double>>();
      auto scores = scripted_scores(cont, logprobs);
      if (e.contains("tokens")) {
        const auto tokens = e.at("tokens").get<std::vector<std::string>>();
        if (tokens.size() != logprobs.size())
          throw Error(ErrorCode::parse_error, "tokens/logprobs length mismatch");
        for (std::size_t i = 0; i < tokens.size(); ++i) scores[i].token = tokens[i];
      }
      script.emplace_back(scoring_digest(prefix, cont), std::move(scores));
    }
  }
  return script;
}

} // namespace gkp
