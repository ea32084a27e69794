#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gkp {

enum class ErrorCode {
  // configuration
  config,
  invalid_argument,
  // data / files
  file_not_found,
  parse_error,
  io_error,
  unknown_question_id,
  invariant_violation,
  missing_mask,
  multiple_masks,
  missing_gold,
  question_set_mismatch,
  id_mismatch,
  non_finite_logit,
  empty_continuation,
  unequal_rater_counts,
  degenerate_chance_agreement,
  corrupt_entry,
  conflicting_payload,
  // backends
  backend_unreachable,
  backend_protocol,
  fixture_miss,
  budget_exhausted,
  unscorable_continuation,
  duplicate_digest,
  wrong_backend_kind,
  // enumeration
  enumeration_cap_exceeded,
};

enum class ErrorFamily { config, data, backend, cap };

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::config: return "config";
  case ErrorCode::invalid_argument: return "invalid-argument";
  case ErrorCode::file_not_found: return "file-not-found";
  case ErrorCode::parse_error: return "parse-error";
  case ErrorCode::io_error: return "io-error";
  case ErrorCode::unknown_question_id: return "unknown-question-id";
  case ErrorCode::invariant_violation: return "invariant-violation";
  case ErrorCode::missing_mask: return "missing-mask";
  case ErrorCode::multiple_masks: return "multiple-masks";
  case ErrorCode::missing_gold: return "missing-gold";
  case ErrorCode::question_set_mismatch: return "question-set-mismatch";
  case ErrorCode::id_mismatch: return "id-mismatch";
  case ErrorCode::non_finite_logit: return "non-finite-logit";
  case ErrorCode::empty_continuation: return "empty-continuation";
  case ErrorCode::unequal_rater_counts: return "unequal-rater-counts";
  case ErrorCode::degenerate_chance_agreement: return "degenerate-chance-agreement";
  case ErrorCode::corrupt_entry: return "corrupt-entry";
  case ErrorCode::conflicting_payload: return "conflicting-payload";
  case ErrorCode::backend_unreachable: return "backend-unreachable";
  case ErrorCode::backend_protocol: return "backend-protocol";
  case ErrorCode::fixture_miss: return "fixture-miss";
  case ErrorCode::budget_exhausted: return "budget-exhausted";
  case ErrorCode::unscorable_continuation: return "unscorable-continuation";
  case ErrorCode::duplicate_digest: return "duplicate-digest";
  case ErrorCode::wrong_backend_kind: return "wrong-backend-kind";
  case ErrorCode::enumeration_cap_exceeded: return "enumeration-cap-exceeded";
  }
  return "unknown";
}

inline ErrorFamily family_of(ErrorCode code) {
  switch (code) {
  case ErrorCode::config:
  case ErrorCode::invalid_argument:
    return ErrorFamily::config;
  case ErrorCode::backend_unreachable:
  case ErrorCode::backend_protocol:
  case ErrorCode::fixture_miss:
  case ErrorCode::budget_exhausted:
  case ErrorCode::unscorable_continuation:
  case ErrorCode::duplicate_digest:
  case ErrorCode::wrong_backend_kind:
    return ErrorFamily::backend;
  case ErrorCode::enumeration_cap_exceeded:
    return ErrorFamily::cap;
  default:
    return ErrorFamily::data;
  }
}

/// Process exit code per error family: 2 config, 3 data, 4 backend, 5 cap.
inline int exit_code_of(ErrorFamily f) {
  switch (f) {
  case ErrorFamily::config: return 2;
  case ErrorFamily::data: return 3;
  case ErrorFamily::backend: return 4;
  case ErrorFamily::cap: return 5;
  }
  return 1;
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorFamily family() const noexcept { return family_of(code_); }

private:
  ErrorCode code_;
};

} // namespace gkp
