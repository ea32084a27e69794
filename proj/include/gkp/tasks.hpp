#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gkp/digest.hpp"
#include "gkp/error.hpp"
#include "gkp/jsonl.hpp"

namespace gkp {

inline constexpr std::string_view kMask = "<mask>";

enum class Task { numersense, csqa, csqa2, qasc, custom };

inline std::string_view to_string(Task t) {
  switch (t) {
  case Task::numersense: return "numersense";
  case Task::csqa: return "csqa";
  case Task::csqa2: return "csqa2";
  case Task::qasc: return "qasc";
  case Task::custom: return "custom";
  }
  return "custom";
}

inline Task task_from_string(std::string_view s) {
  for (Task t : {Task::numersense, Task::csqa, Task::csqa2, Task::qasc, Task::custom})
    if (to_string(t) == s) return t;
  throw Error(ErrorCode::config, "unknown task '" + std::string(s) + "'");
}

enum class ScoringMode { continuation, infill };

inline std::string_view to_string(ScoringMode m) {
  return m == ScoringMode::infill ? "infill" : "continuation";
}

inline ScoringMode scoring_mode_from_string(std::string_view s) {
  if (s == "infill") return ScoringMode::infill;
  if (s == "continuation") return ScoringMode::continuation;
  throw Error(ErrorCode::config, "unknown scoring mode '" + std::string(s) + "'");
}

inline ScoringMode default_scoring_mode(Task t) {
  return t == Task::numersense ? ScoringMode::infill : ScoringMode::continuation;
}

/// Knowledge-generation defaults per task: M statements of up to max_tokens.
struct TaskProfile {
  int M = 20;
  int max_tokens = 64;
};

inline TaskProfile task_profile(Task t) {
  if (t == Task::csqa2) return {5, 128};
  return {20, 64};
}

inline const std::vector<std::string> &canonical_numersense_choices() {
  static const std::vector<std::string> choices{"no",   "zero", "one",   "two",   "three", "four",
                                                "five", "six",  "seven", "eight", "nine",  "ten"};
  return choices;
}

inline const std::vector<std::string> &canonical_binary_choices() {
  static const std::vector<std::string> choices{"yes", "no"};
  return choices;
}

struct QuestionRecord {
  std::string id;
  Task task = Task::custom;
  std::string text;
  std::vector<std::string> choices;
  std::optional<std::size_t> gold_index;
  Json metadata = Json::object();

  bool operator==(const QuestionRecord &) const = default;
};

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

/// Every violated invariant as a machine-readable code; empty means valid.
inline std::vector<std::string> validate(const QuestionRecord &q) {
  std::vector<std::string> v;
  if (q.id.empty()) v.emplace_back("empty-id");
  if (q.text.empty()) v.emplace_back("empty-text");
  if (q.choices.size() < 2) v.emplace_back("too-few-choices");
  if (std::any_of(q.choices.begin(), q.choices.end(), [](const auto &c) { return c.empty(); }))
    v.emplace_back("empty-choice");
  if (std::set<std::string>(q.choices.begin(), q.choices.end()).size() != q.choices.size())
    v.emplace_back("choices-not-distinct");
  if (q.gold_index && *q.gold_index >= q.choices.size()) v.emplace_back("gold-index-range");
  const auto masks = count_occurrences(q.text, kMask);
  switch (q.task) {
  case Task::numersense:
    if (masks == 0) v.emplace_back("missing-mask");
    if (masks > 1) v.emplace_back("multiple-masks");
    if (q.choices != canonical_numersense_choices()) v.emplace_back("noncanonical-choices");
    break;
  case Task::csqa2:
    if (q.choices != canonical_binary_choices()) v.emplace_back("noncanonical-choices");
    break;
  case Task::csqa:
    if (q.choices.size() != 5) v.emplace_back("wrong-choice-count");
    break;
  case Task::qasc:
    if (q.choices.size() != 8) v.emplace_back("wrong-choice-count");
    break;
  case Task::custom:
    break;
  }
  if (q.task != Task::numersense && masks > 1) v.emplace_back("multiple-masks");
  return v;
}

inline std::string normalize_mask(std::string text) {
  for (auto pos = text.find("[M]"); pos != std::string::npos; pos = text.find("[M]", pos))
    text.replace(pos, 3, kMask);
  return text;
}

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Builds a record from one dataset line. Choices are implied for
/// numersense and csqa2; the gold label comes from "answer" (choice text) or
/// "gold_index".
inline QuestionRecord record_from_json(const Json &j, Task task) {
  QuestionRecord q;
  q.task = task;
  if (j.contains("task") && j.at("task").get<std::string>() != to_string(task))
    throw Error(ErrorCode::invariant_violation,
                "record task '" + j.at("task").get<std::string>() + "' does not match " +
                    std::string(to_string(task)));
  q.id = j.at("id").get<std::string>();
  q.text = normalize_mask(j.at("text").get<std::string>());
  if (task == Task::numersense && !j.contains("choices"))
    q.choices = canonical_numersense_choices();
  else if (task == Task::csqa2 && !j.contains("choices"))
    q.choices = canonical_binary_choices();
  else
    q.choices = j.at("choices").get<std::vector<std::string>>();
  if (j.contains("metadata")) q.metadata = j.at("metadata");
  if (j.contains("gold_index") && !j.at("gold_index").is_null()) {
    q.gold_index = j.at("gold_index").get<std::size_t>();
  } else if (j.contains("answer") && !j.at("answer").is_null()) {
    std::string answer = j.at("answer").get<std::string>();
    if (task == Task::csqa2) {
      answer = lowercase(answer);
      if (answer == "true") answer = "yes";
      if (answer == "false") answer = "no";
    }
    const auto it = std::find(q.choices.begin(), q.choices.end(), answer);
    if (it == q.choices.end())
      throw Error(ErrorCode::invariant_violation, q.id + ": answer '" + answer + "' is not a choice");
    q.gold_index = static_cast<std::size_t>(it - q.choices.begin());
  }
  return q;
}

inline Json to_json(const QuestionRecord &q) {
  Json j{{"id", q.id}, {"task", to_string(q.task)}, {"text", q.text}, {"choices", q.choices}};
  j["gold_index"] = q.gold_index ? Json(*q.gold_index) : Json(nullptr);
  j["metadata"] = q.metadata;
  return j;
}

struct DatasetManifest {
  std::string path;
  Task task = Task::custom;
  std::size_t record_count = 0;
  std::string digest;

  Json to_json() const {
    return {{"path", path}, {"task", to_string(task)}, {"record_count", record_count},
            {"digest", digest}, {"digest_algorithm", kDigestAlgorithm}};
  }
};

struct Dataset {
  std::vector<QuestionRecord> records;
  DatasetManifest manifest;

  const QuestionRecord *find(std::string_view id) const {
    for (const auto &r : records)
      if (r.id == id) return &r;
    return nullptr;
  }
};

/// Loads and validates a line-per-record dataset file.
inline Dataset load_dataset(const std::filesystem::path &path, Task task) {
  Dataset ds;
  std::set<std::string> seen;
  for (const auto &[line, value] : read_jsonl(path)) {
    QuestionRecord q;
    try {
      q = record_from_json(value, task);
    } catch (const Json::exception &e) {
      throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
    if (const auto v = validate(q); !v.empty())
      throw Error(ErrorCode::invariant_violation, q.id + ": " + v.front());
    if (!seen.insert(q.id).second)
      throw Error(ErrorCode::invariant_violation, q.id + ": duplicate question id");
    ds.records.push_back(std::move(q));
  }
  ds.manifest = {path.string(), task, ds.records.size(), sha256_hex(read_file(path))};
  return ds;
}

inline std::string serialize_dataset(const std::vector<QuestionRecord> &records) {
  std::vector<Json> lines;
  for (const auto &r : records) lines.push_back(to_json(r));
  return to_jsonl(lines);
}

/// Substitutes the choice into the mask slot, optionally prefixing knowledge
/// with a single space.
inline std::string realize(const QuestionRecord &q, std::size_t choice_index,
                           const std::optional<std::string> &knowledge = std::nullopt) {
  if (choice_index >= q.choices.size())
    throw Error(ErrorCode::invalid_argument, "choice index out of range");
  const auto masks = count_occurrences(q.text, kMask);
  if (masks == 0) throw Error(ErrorCode::missing_mask, q.id);
  if (masks > 1) throw Error(ErrorCode::multiple_masks, q.id);
  std::string text = q.text;
  text.replace(text.find(kMask), kMask.size(), q.choices[choice_index]);
  if (knowledge) return *knowledge + " " + text;
  return text;
}

} // namespace gkp
