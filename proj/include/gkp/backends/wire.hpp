#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "gkp/backends/backend.hpp"

namespace gkp {

struct WireConfig {
  std::string base_url;              // scheme://host[:port]
  std::string path = "/v1/completions";
  std::string api_key;
  std::string model;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::optional<std::size_t> request_cap;
  std::chrono::seconds timeout{120};

  /// Fills endpoint and key from GKP_ENDPOINT / GKP_API_KEY when unset.
  void apply_environment() {
    if (base_url.empty())
      if (const char *v = std::getenv("GKP_ENDPOINT")) base_url = v;
    if (api_key.empty())
      if (const char *v = std::getenv("GKP_API_KEY")) api_key = v;
  }
};

namespace wire {

inline Json generate_body(const WireConfig &cfg, const GenerateRequest &req) {
  return {{"model", cfg.model},
          {"prompt", req.prompt},
          {"max_tokens", req.params.max_tokens},
          {"top_p", req.params.top_p},
          {"temperature", req.params.temperature},
          {"stop", req.params.stop_sequences},
          {"logprobs", nullptr},
          {"echo", false},
          {"n", 1}};
}

/// Prefix and continuation are joined by one space (when the prefix is
/// nonempty); the continuation starts at character offset `prefix_length`.
inline std::string scoring_prompt(const ScoreRequest &req, std::size_t &prefix_length) {
  std::string prompt = req.prefix;
  if (!prompt.empty() && !req.continuation.empty()) prompt += ' ';
  prefix_length = prompt.size();
  prompt += req.continuation;
  return prompt;
}

inline Json score_body(const WireConfig &cfg, const std::string &prompt) {
  return {{"model", cfg.model}, {"prompt", prompt}, {"max_tokens", 0}, {"top_p", 1.0},
          {"temperature", 1.0}, {"stop", Json::array()}, {"logprobs", 0},
          {"echo", true},       {"n", 1}};
}

inline Completion parse_completion(const Json &response, const SamplingParams &params) {
  const auto &choice = response.at("choices").at(0);
  std::string text = choice.at("text").get<std::string>();
  Completion c = finalize_completion(text, params);
  const bool length = choice.value("finish_reason", std::string("stop")) == "length";
  if (length && c.text.size() == text.size()) {
    c.finish_reason = FinishReason::length;
    c.token_count = params.max_tokens;
  } else if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
             choice["logprobs"].contains("tokens")) {
    c.token_count = static_cast<int>(choice["logprobs"]["tokens"].size());
  } else if (response.contains("usage") && response["usage"].contains("completion_tokens")) {
    c.token_count = response["usage"]["completion_tokens"].get<int>();
  }
  return c;
}

/// Continuation token logprobs from an echo response, aligned by character
/// offset: every token ending past `prefix_length` belongs to the
/// continuation. A null logprob is tolerated only on the first prompt token.
inline std::vector<TokenScore> extract_scores(const Json &response, std::size_t prefix_length) {
  const auto &lp = response.at("choices").at(0).at("logprobs");
  const auto &tokens = lp.at("tokens");
  const auto &logprobs = lp.at("token_logprobs");
  const auto &offsets = lp.at("text_offset");
  if (tokens.size() != logprobs.size() || tokens.size() != offsets.size())
    throw Error(ErrorCode::backend_protocol, "logprobs arrays differ in length");
  std::vector<TokenScore> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto token = tokens[i].get<std::string>();
    const auto offset = offsets[i].get<std::size_t>();
    if (offset + token.size() <= prefix_length) continue;
    if (logprobs[i].is_null()) {
      if (i == 0) continue;
      throw Error(ErrorCode::unscorable_continuation, "null logprob for token '" + token + "'");
    }
    const double v = logprobs[i].get<double>();
    if (!std::isfinite(v)) throw Error(ErrorCode::unscorable_continuation, "non-finite logprob");
    out.push_back({token.empty() ? std::string("<empty>") : token, v});
  }
  if (out.empty()) throw Error(ErrorCode::unscorable_continuation, "no continuation tokens in response");
  return out;
}

} // namespace wire

/// Client for a JSON-over-HTTP completion service.
class WireBackend final : public Backend {
public:
  WireBackend(BackendDescriptor descriptor, WireConfig config)
      : descriptor_(std::move(descriptor)), config_(std::move(config)) {
    descriptor_.kind = BackendKind::wire;
    config_.apply_environment();
    if (config_.base_url.empty())
      throw Error(ErrorCode::config, "wire backend '" + descriptor_.id + "' has no endpoint");
    if (config_.model.empty()) config_.model = descriptor_.model_label;
  }

  const BackendDescriptor &descriptor() const override { return descriptor_; }
  std::size_t requests_sent() const { return sent_; }

  Completion generate(const GenerateRequest &request) override {
    return wire::parse_completion(post(wire::generate_body(config_, request)), request.params);
  }

  std::vector<TokenScore> score_continuation(const ScoreRequest &request) override {
    std::size_t prefix_length = 0;
    const auto prompt = wire::scoring_prompt(request, prefix_length);
    return wire::extract_scores(post(wire::score_body(config_, prompt)), prefix_length);
  }

private:
  Json post(const Json &body) {
    const std::string payload = body.dump();
    std::string last_error = "no attempt made";
    auto backoff = config_.initial_backoff;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      if (config_.request_cap && sent_.fetch_add(1) >= *config_.request_cap)
        throw Error(ErrorCode::budget_exhausted,
                    "request cap of " + std::to_string(*config_.request_cap) + " reached");
      if (!config_.request_cap) ++sent_;
      httplib::Client client(config_.base_url);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      httplib::Headers headers;
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
      auto res = client.Post(config_.path, headers, payload, "application/json");
      if (res && res->status == 200) {
        try {
          return Json::parse(res->body);
        } catch (const Json::parse_error &e) {
          throw Error(ErrorCode::backend_protocol, std::string("malformed response: ") + e.what());
        }
      }
      if (res && res->status != 429 && res->status < 500)
        throw Error(ErrorCode::backend_protocol,
                    "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (attempt < config_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw Error(ErrorCode::backend_unreachable,
                config_.base_url + " after " + std::to_string(config_.max_attempts) +
                    " attempts: " + last_error);
  }

  BackendDescriptor descriptor_;
  WireConfig config_;
  std::atomic<std::size_t> sent_{0};
};

} // namespace gkp
