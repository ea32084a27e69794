#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gkp/backends/backend.hpp"
#include "gkp/knowledge.hpp"
#include "gkp/parallel.hpp"
#include "gkp/tasks.hpp"

namespace gkp {

enum class AggregationMethod { max, moe, poe };

inline std::string_view to_string(AggregationMethod m) {
  switch (m) {
  case AggregationMethod::max: return "max";
  case AggregationMethod::moe: return "moe";
  case AggregationMethod::poe: return "poe";
  }
  return "max";
}

inline AggregationMethod aggregation_method_from_string(std::string_view s) {
  const auto lower = lowercase(std::string(s));
  for (auto m : {AggregationMethod::max, AggregationMethod::moe, AggregationMethod::poe})
    if (to_string(m) == lower) return m;
  throw Error(ErrorCode::config, "unknown aggregation method '" + std::string(s) + "'");
}

/// q_0 = q; q_m = k_m, one space, q.
struct AugmentedQuestion {
  std::size_t m = 0;
  std::string text;
};

inline AugmentedQuestion vanilla_question(const QuestionRecord &q) { return {0, q.text}; }

inline AugmentedQuestion augment(const QuestionRecord &q, const KnowledgeStatement &statement,
                                 std::size_t m) {
  if (m == 0) throw Error(ErrorCode::invalid_argument, "m = 0 is the vanilla row");
  if (statement.text.empty()) throw Error(ErrorCode::invalid_argument, "empty knowledge statement");
  return {m, statement.text + " " + q.text};
}

/// s_I: summed token logprobs of the choice. Continuation mode scores the
/// choice after the (augmented) question; infill mode scores the whole
/// sentence with the choice in the mask slot, knowledge first.
inline double score_choice(Backend &backend, const QuestionRecord &q, std::size_t choice_index,
                           ScoringMode mode,
                           const std::optional<std::string> &knowledge = std::nullopt) {
  if (choice_index >= q.choices.size())
    throw Error(ErrorCode::invalid_argument, "choice index out of range");
  if (mode == ScoringMode::infill)
    return sum_logprobs(score_continuation(backend, "", realize(q, choice_index, knowledge)));
  const std::string prefix = knowledge ? *knowledge + " " + q.text : q.text;
  return sum_logprobs(score_continuation(backend, prefix, q.choices[choice_index]));
}

/// Softmax with max subtraction.
inline std::vector<double> normalize(const std::vector<double> &logits) {
  if (logits.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least two choices");
  for (double l : logits)
    if (!std::isfinite(l)) throw Error(ErrorCode::non_finite_logit, "logit is not finite");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    z += out[i];
  }
  for (double &p : out) p /= z;
  return out;
}

/// p_I(a | q_m) for m = 0..M (row 0 vanilla) over the question's choices.
struct ScoreMatrix {
  std::string question_id;
  std::vector<std::string> choice_labels;
  std::vector<std::vector<double>> rows;
  ScoringMode mode = ScoringMode::continuation;

  std::size_t choice_count() const { return choice_labels.size(); }
  std::size_t knowledge_rows() const { return rows.empty() ? 0 : rows.size() - 1; }

  void validate() const {
    if (rows.empty()) throw Error(ErrorCode::invariant_violation, question_id + ": matrix has no rows");
    for (const auto &row : rows) {
      if (row.size() != choice_labels.size())
        throw Error(ErrorCode::invariant_violation, question_id + ": ragged matrix row");
      double total = 0.0;
      for (double p : row) {
        if (!(p >= 0.0 && p <= 1.0))
          throw Error(ErrorCode::invariant_violation, question_id + ": entry outside [0,1]");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw Error(ErrorCode::invariant_violation, question_id + ": row does not sum to 1");
    }
  }

  /// Vanilla row plus the first `m` knowledge rows.
  ScoreMatrix truncated(std::size_t m) const {
    ScoreMatrix out = *this;
    if (out.rows.size() > m + 1) out.rows.resize(m + 1);
    return out;
  }

  Json to_json() const {
    return {{"question_id", question_id}, {"choices", choice_labels}, {"rows", rows},
            {"mode", to_string(mode)}};
  }

  static ScoreMatrix from_json(const Json &j) {
    ScoreMatrix m{j.at("question_id").get<std::string>(),
                  j.at("choices").get<std::vector<std::string>>(),
                  j.at("rows").get<std::vector<std::vector<double>>>(),
                  scoring_mode_from_string(j.at("mode").get<std::string>())};
    m.validate();
    return m;
  }
};

/// Scores every (row, choice) cell, `workers` cells at a time.
inline ScoreMatrix build_score_matrix(Backend &backend, const QuestionRecord &q,
                                      const KnowledgeSet &knowledge, ScoringMode mode,
                                      std::size_t workers = 1) {
  const std::size_t rows = knowledge.statements.size() + 1;
  const std::size_t cols = q.choices.size();
  std::vector<double> logits(rows * cols);
  parallel_for(rows * cols, workers, [&](std::size_t cell) {
    const std::size_t m = cell / cols;
    const std::size_t a = cell % cols;
    std::optional<std::string> k;
    if (m > 0) k = knowledge.statements[m - 1].text;
    logits[cell] = score_choice(backend, q, a, mode, k);
  });
  ScoreMatrix matrix{q.id, q.choices, {}, mode};
  for (std::size_t m = 0; m < rows; ++m)
    matrix.rows.push_back(normalize({logits.begin() + static_cast<std::ptrdiff_t>(m * cols),
                                     logits.begin() + static_cast<std::ptrdiff_t>((m + 1) * cols)}));
  matrix.validate();
  return matrix;
}

struct PredictionRecord {
  std::string question_id;
  AggregationMethod method = AggregationMethod::max;
  std::size_t predicted_index = 0;
  std::vector<double> aggregate_scores;
  std::optional<std::size_t> selected_m; // MAX only, and only when m-hat >= 1
  std::size_t vanilla_index = 0;

  bool operator==(const PredictionRecord &) const = default;

  Json to_json() const {
    Json j{{"question_id", question_id},
           {"method", to_string(method)},
           {"predicted_index", predicted_index},
           {"aggregate_scores", aggregate_scores},
           {"vanilla_index", vanilla_index}};
    j["selected_m"] = selected_m ? Json(*selected_m) : Json(nullptr);
    return j;
  }

  static PredictionRecord from_json(const Json &j) {
    PredictionRecord p;
    p.question_id = j.at("question_id").get<std::string>();
    p.method = aggregation_method_from_string(j.at("method").get<std::string>());
    p.predicted_index = j.at("predicted_index").get<std::size_t>();
    p.aggregate_scores = j.at("aggregate_scores").get<std::vector<double>>();
    if (!j.at("selected_m").is_null()) p.selected_m = j.at("selected_m").get<std::size_t>();
    p.vanilla_index = j.at("vanilla_index").get<std::size_t>();
    return p;
  }
};

/// First index of the maximum.
inline std::size_t argmax(const std::vector<double> &v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline PredictionRecord aggregate(const ScoreMatrix &matrix, AggregationMethod method) {
  matrix.validate();
  const std::size_t cols = matrix.choice_count();
  PredictionRecord rec;
  rec.question_id = matrix.question_id;
  rec.method = method;
  rec.vanilla_index = argmax(matrix.rows.front());
  switch (method) {
  case AggregationMethod::max: {
    rec.aggregate_scores.assign(cols, 0.0);
    std::size_t best_row = 0;
    double best_row_score = -1.0;
    for (std::size_t m = 0; m < matrix.rows.size(); ++m) {
      const auto &row = matrix.rows[m];
      double row_max = row[0];
      for (std::size_t a = 0; a < cols; ++a) {
        rec.aggregate_scores[a] = std::max(rec.aggregate_scores[a], row[a]);
        row_max = std::max(row_max, row[a]);
      }
      if (row_max > best_row_score) {
        best_row_score = row_max;
        best_row = m;
      }
    }
    rec.predicted_index = argmax(rec.aggregate_scores);
    if (best_row >= 1) rec.selected_m = best_row;
    break;
  }
  case AggregationMethod::moe: {
    rec.aggregate_scores.assign(cols, 0.0);
    for (const auto &row : matrix.rows)
      for (std::size_t a = 0; a < cols; ++a) rec.aggregate_scores[a] += row[a];
    rec.predicted_index = argmax(rec.aggregate_scores);
    break;
  }
  case AggregationMethod::poe: {
    std::vector<double> log_scores(cols, 0.0);
    for (const auto &row : matrix.rows)
      for (std::size_t a = 0; a < cols; ++a)
        log_scores[a] += row[a] > 0.0 ? std::log(row[a]) : -std::numeric_limits<double>::infinity();
    rec.aggregate_scores.resize(cols);
    for (std::size_t a = 0; a < cols; ++a) rec.aggregate_scores[a] = std::exp(log_scores[a]);
    rec.predicted_index = argmax(log_scores);
    break;
  }
  }
  return rec;
}

} // namespace gkp
