#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gkp/backends/backend.hpp"
#include "gkp/jsonl.hpp"
#include "gkp/tasks.hpp"

namespace gkp {

enum class KnowledgeSource { generated, random, context, answer, external };

inline std::string_view to_string(KnowledgeSource s) {
  switch (s) {
  case KnowledgeSource::generated: return "generated";
  case KnowledgeSource::random: return "random";
  case KnowledgeSource::context: return "context";
  case KnowledgeSource::answer: return "answer";
  case KnowledgeSource::external: return "external";
  }
  return "generated";
}

inline KnowledgeSource knowledge_source_from_string(std::string_view s) {
  for (auto k : {KnowledgeSource::generated, KnowledgeSource::random, KnowledgeSource::context,
                 KnowledgeSource::answer, KnowledgeSource::external})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::config, "unknown knowledge source '" + std::string(s) + "'");
}

struct Demonstration {
  std::string question;
  std::string knowledge;
  std::optional<std::string> answer; // only used by lint_template
};

/// Instruction, fixed demonstrations and a placeholder for the new question.
/// `output_label` is "Knowledge" for knowledge prompts; answer-baseline
/// templates set it to "Answer".
struct PromptTemplate {
  std::string task_id;
  std::string instruction;
  std::vector<Demonstration> demonstrations;
  std::string output_label = "Knowledge";

  void validate() const {
    if (instruction.empty()) throw Error(ErrorCode::invalid_argument, "template instruction is empty");
    if (demonstrations.empty())
      throw Error(ErrorCode::invalid_argument, "template needs at least one demonstration");
    for (const auto &d : demonstrations)
      if (d.question.empty() || d.knowledge.empty())
        throw Error(ErrorCode::invalid_argument, "demonstration fields must be nonempty");
    if (output_label.empty()) throw Error(ErrorCode::invalid_argument, "output label is empty");
  }

  static PromptTemplate from_json(const Json &j) {
    PromptTemplate t;
    t.task_id = j.value("task_id", std::string{});
    t.instruction = j.at("instruction").get<std::string>();
    t.output_label = j.value("output_label", t.output_label);
    for (const auto &d : j.at("demonstrations")) {
      Demonstration demo{d.at("question").get<std::string>(), d.at("knowledge").get<std::string>(), {}};
      if (d.contains("answer")) demo.answer = d.at("answer").get<std::string>();
      t.demonstrations.push_back(std::move(demo));
    }
    t.validate();
    return t;
  }

  Json to_json() const {
    Json demos = Json::array();
    for (const auto &d : demonstrations) {
      Json e{{"question", d.question}, {"knowledge", d.knowledge}};
      if (d.answer) e["answer"] = *d.answer;
      demos.push_back(std::move(e));
    }
    return {{"task_id", task_id}, {"instruction", instruction}, {"output_label", output_label},
            {"demonstrations", demos}};
  }

  std::string digest() const { return sha256_hex(to_json().dump()); }
};

inline PromptTemplate load_template(const std::filesystem::path &path) {
  try {
    return PromptTemplate::from_json(read_json_file(path));
  } catch (const Json::exception &e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
}

/// instruction, blank line, one "Input: q\n<Label>: k\n\n" block per
/// demonstration, then "Input: question\n<Label>:".
inline std::string render_prompt(const PromptTemplate &t, std::string_view question_text) {
  t.validate();
  if (question_text.empty()) throw Error(ErrorCode::invalid_argument, "question text is empty");
  std::string out = t.instruction;
  out += "\n\n";
  for (const auto &d : t.demonstrations) {
    out += "Input: " + d.question + "\n" + t.output_label + ": " + d.knowledge + "\n\n";
  }
  out += "Input: ";
  out += question_text;
  out += "\n" + t.output_label + ":";
  return out;
}

/// Warnings for demonstrations whose knowledge spells out the answered
/// question (e.g. "Penguins have two wings." for "Penguins have <mask> wings.").
inline std::vector<std::string> lint_template(const PromptTemplate &t) {
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < t.demonstrations.size(); ++i) {
    const auto &d = t.demonstrations[i];
    if (!d.answer) continue;
    std::string filled = d.question;
    if (const auto pos = filled.find(kMask); pos != std::string::npos)
      filled.replace(pos, kMask.size(), *d.answer);
    else
      filled += " " + *d.answer;
    auto strip = [](std::string s) {
      while (!s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == ' ')) s.pop_back();
      return lowercase(s);
    };
    if (lowercase(d.knowledge).find(strip(filled)) != std::string::npos)
      warnings.push_back("demonstration " + std::to_string(i) + " states the answer directly");
  }
  return warnings;
}

struct StatementOrigin {
  std::string backend_id;
  std::string params_digest;
  std::size_t sample_index = 0;

  bool operator==(const StatementOrigin &) const = default;
};

struct KnowledgeStatement {
  std::string text;
  KnowledgeSource source = KnowledgeSource::generated;
  StatementOrigin origin;

  bool operator==(const KnowledgeStatement &) const = default;
};

struct KnowledgeSet {
  std::string question_id;
  std::vector<KnowledgeStatement> statements;
  std::size_t requested_M = 0;

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    for (const auto &s : statements) out.push_back(s.text);
    return out;
  }

  /// First `m` statements, generation order preserved.
  KnowledgeSet truncated(std::size_t m) const {
    KnowledgeSet out = *this;
    if (out.statements.size() > m) out.statements.resize(m);
    out.requested_M = std::min(requested_M, std::max<std::size_t>(m, 1));
    return out;
  }

  Json to_json() const {
    Json stmts = Json::array();
    for (const auto &s : statements)
      stmts.push_back({{"text", s.text},
                       {"source", to_string(s.source)},
                       {"origin",
                        {{"backend", s.origin.backend_id},
                         {"params_digest", s.origin.params_digest},
                         {"sample_index", s.origin.sample_index}}}});
    Json j{{"question_id", question_id}, {"requested_M", requested_M}, {"statements", stmts}};
    j["source"] = statements.empty() ? Json(nullptr) : Json(to_string(statements.front().source));
    return j;
  }

  static KnowledgeSet from_json(const Json &j) {
    KnowledgeSet k;
    k.question_id = j.at("question_id").get<std::string>();
    k.requested_M = j.at("requested_M").get<std::size_t>();
    for (const auto &s : j.at("statements")) {
      const auto &o = s.at("origin");
      k.statements.push_back({s.at("text").get<std::string>(),
                              knowledge_source_from_string(s.at("source").get<std::string>()),
                              {o.at("backend").get<std::string>(), o.at("params_digest").get<std::string>(),
                               o.at("sample_index").get<std::size_t>()}});
    }
    return k;
  }
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(b, e - b + 1));
}

/// Trims, drops empties and exact duplicates (first occurrence wins).
inline std::vector<std::string> filter_statements(const std::vector<std::string> &raw) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto &r : raw) {
    auto t = trim(r);
    if (t.empty() || !seen.insert(t).second) continue;
    out.push_back(std::move(t));
  }
  return out;
}

namespace detail {

inline std::string flatten_newlines(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '\n' || c == '\r'; }, ' ');
  return s;
}

/// Draws M samples for one prompt in sample-index order and filters them.
inline KnowledgeSet sample_statements(Backend &backend, const std::string &prompt,
                                      const std::string &question_id, int M,
                                      const SamplingParams &params, KnowledgeSource source) {
  if (M < 1) throw Error(ErrorCode::invalid_argument, "M must be >= 1");
  params.validate();
  if (std::find(params.stop_sequences.begin(), params.stop_sequences.end(), "\n") ==
      params.stop_sequences.end())
    throw Error(ErrorCode::invalid_argument, "sampling params must stop at newline");
  const auto params_digest = params.digest();
  KnowledgeSet set{question_id, {}, static_cast<std::size_t>(M)};
  std::set<std::string> seen;
  for (int i = 0; i < M; ++i) {
    const auto completion = generate(backend, prompt, params, static_cast<std::size_t>(i));
    auto text = trim(flatten_newlines(completion.text));
    if (text.empty() || !seen.insert(text).second) continue;
    set.statements.push_back(
        {std::move(text), source, {backend.descriptor().id, params_digest, static_cast<std::size_t>(i)}});
  }
  return set;
}

} // namespace detail

inline KnowledgeSet sample_knowledge(const QuestionRecord &question, const PromptTemplate &tmpl,
                                     int M, const SamplingParams &params, Backend &backend) {
  return detail::sample_statements(backend, render_prompt(tmpl, question.text), question.id, M,
                                   params, KnowledgeSource::generated);
}

/// Unconditional samples (empty prompt); the same draws serve every question.
inline KnowledgeSet sample_random_statements(const std::string &question_id, int M,
                                             const SamplingParams &params, Backend &backend) {
  return detail::sample_statements(backend, "", question_id, M, params, KnowledgeSource::random);
}

inline KnowledgeSet sample_context_statements(const QuestionRecord &question, int M,
                                              const SamplingParams &params, Backend &backend) {
  return detail::sample_statements(backend, question.text, question.id, M, params,
                                   KnowledgeSource::context);
}

inline KnowledgeSet sample_answer_statements(const QuestionRecord &question,
                                             const PromptTemplate &answer_template, int M,
                                             const SamplingParams &params, Backend &backend) {
  return detail::sample_statements(backend, render_prompt(answer_template, question.text),
                                   question.id, M, params, KnowledgeSource::answer);
}

/// External statements file: one {"question_id": ..., "statements": [...]}
/// per line.
class ExternalStatements {
public:
  explicit ExternalStatements(const std::filesystem::path &path) : path_(path.string()) {
    for (const auto &[line, value] : read_jsonl(path)) {
      try {
        auto id = value.at("question_id").get<std::string>();
        auto statements = value.at("statements").get<std::vector<std::string>>();
        if (!by_id_.emplace(id, std::move(statements)).second)
          throw Error(ErrorCode::parse_error, path_ + ":" + std::to_string(line) + ": duplicate question id " + id);
      } catch (const Json::exception &e) {
        throw Error(ErrorCode::parse_error, path_ + ":" + std::to_string(line) + ": " + e.what());
      }
    }
  }

  KnowledgeSet get(const std::string &question_id) const {
    const auto it = by_id_.find(question_id);
    if (it == by_id_.end()) throw Error(ErrorCode::unknown_question_id, question_id);
    std::vector<std::string> raw;
    for (const auto &s : it->second) raw.push_back(detail::flatten_newlines(s));
    const auto kept = filter_statements(raw);
    KnowledgeSet set{question_id, {}, std::max<std::size_t>(kept.size(), 1)};
    for (const auto &text : kept) {
      const auto idx = static_cast<std::size_t>(
          std::find_if(raw.begin(), raw.end(), [&](const auto &r) { return trim(r) == text; }) - raw.begin());
      set.statements.push_back({text, KnowledgeSource::external, {"file:" + path_, "", idx}});
    }
    return set;
  }

private:
  std::string path_;
  std::map<std::string, std::vector<std::string>> by_id_;
};

inline KnowledgeSet load_external_statements(const std::filesystem::path &path,
                                             const std::string &question_id) {
  return ExternalStatements(path).get(question_id);
}

} // namespace gkp
