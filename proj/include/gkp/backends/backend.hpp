#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "gkp/backends/types.hpp"

namespace gkp {

/// Text generation and token-level scoring. Implementations must be safe to
/// call from several threads at once.
class Backend {
public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor &descriptor() const = 0;
  virtual Completion generate(const GenerateRequest &request) = 0;
  /// One TokenScore per continuation token, in order.
  virtual std::vector<TokenScore> score_continuation(const ScoreRequest &request) = 0;
};

inline Completion generate(Backend &backend, const std::string &prompt,
                           const SamplingParams &params, std::size_t sample_index = 0) {
  params.validate();
  return backend.generate({prompt, params, sample_index});
}

inline std::vector<TokenScore> score_continuation(Backend &backend, const std::string &prefix,
                                                  const std::string &continuation) {
  if (continuation.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorCode::empty_continuation, "continuation is empty");
  return backend.score_continuation({prefix, continuation});
}

/// Forwards to another backend and counts calls that reach it.
class CountingBackend final : public Backend {
public:
  explicit CountingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  const BackendDescriptor &descriptor() const override { return inner_->descriptor(); }

  Completion generate(const GenerateRequest &request) override {
    ++generate_calls_;
    return inner_->generate(request);
  }
  std::vector<TokenScore> score_continuation(const ScoreRequest &request) override {
    ++score_calls_;
    return inner_->score_continuation(request);
  }

  std::size_t generate_calls() const { return generate_calls_; }
  std::size_t score_calls() const { return score_calls_; }
  std::size_t calls() const { return generate_calls_ + score_calls_; }

private:
  std::shared_ptr<Backend> inner_;
  std::atomic<std::size_t> generate_calls_{0};
  std::atomic<std::size_t> score_calls_{0};
};

} // namespace gkp
