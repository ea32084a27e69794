#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gkp/inference.hpp"
#include "gkp/knowledge.hpp"
#include "gkp/random.hpp"
#include "gkp/tasks.hpp"

namespace gkp {

using GoldMap = std::map<std::string, std::size_t>;

inline GoldMap gold_map(const std::vector<QuestionRecord> &questions) {
  GoldMap gold;
  for (const auto &q : questions)
    if (q.gold_index) gold.emplace(q.id, *q.gold_index);
  return gold;
}

inline std::size_t count_correct(const std::vector<PredictionRecord> &predictions, const GoldMap &gold) {
  if (predictions.empty()) throw Error(ErrorCode::missing_gold, "no predictions to score");
  std::size_t correct = 0;
  for (const auto &p : predictions) {
    const auto it = gold.find(p.question_id);
    if (it == gold.end()) throw Error(ErrorCode::missing_gold, p.question_id);
    if (it->second == p.predicted_index) ++correct;
  }
  return correct;
}

inline double accuracy(const std::vector<PredictionRecord> &predictions, const GoldMap &gold) {
  return static_cast<double>(count_correct(predictions, gold)) / static_cast<double>(predictions.size());
}

/// Induced average (mu), induced deviation (sigma) and selected score
/// (omega) per choice, over knowledge rows only. With no knowledge rows the
/// vanilla row stands in: mu = omega = p(a|q), sigma = 0.
struct InducedMetrics {
  std::string question_id;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> omega;
  std::optional<std::size_t> selected_m;
};

inline InducedMetrics induced_metrics(const ScoreMatrix &matrix) {
  matrix.validate();
  const std::size_t cols = matrix.choice_count();
  const std::size_t M = matrix.knowledge_rows();
  InducedMetrics out{matrix.question_id, {}, std::vector<double>(cols, 0.0), {}, std::nullopt};
  if (M == 0) {
    out.mu = out.omega = matrix.rows[0];
    return out;
  }
  out.mu.assign(cols, 0.0);
  for (std::size_t m = 1; m <= M; ++m)
    for (std::size_t a = 0; a < cols; ++a) out.mu[a] += matrix.rows[m][a];
  for (double &v : out.mu) v /= static_cast<double>(M);
  for (std::size_t a = 0; a < cols; ++a) {
    double ss = 0.0;
    for (std::size_t m = 1; m <= M; ++m) {
      const double d = matrix.rows[m][a] - out.mu[a];
      ss += d * d;
    }
    out.sigma[a] = std::sqrt(ss / static_cast<double>(M));
  }
  std::size_t best = 1;
  double best_score = -1.0;
  for (std::size_t m = 1; m <= M; ++m) {
    const double row_max = *std::max_element(matrix.rows[m].begin(), matrix.rows[m].end());
    if (row_max > best_score) {
      best_score = row_max;
      best = m;
    }
  }
  out.selected_m = best;
  out.omega = matrix.rows[best];
  return out;
}

/// Dataset means over gold choices (X*) and over all distractor pairs (X').
struct AggregateMetrics {
  double mu_gold = 0, mu_distractor = 0;
  double sigma_gold = 0, sigma_distractor = 0;
  double omega_gold = 0, omega_distractor = 0;
  std::size_t questions = 0;
  std::size_t distractor_pairs = 0;

  Json to_json() const {
    return {{"mu_gold", mu_gold},       {"mu_distractor", mu_distractor},
            {"sigma_gold", sigma_gold}, {"sigma_distractor", sigma_distractor},
            {"omega_gold", omega_gold}, {"omega_distractor", omega_distractor},
            {"questions", questions},   {"distractor_pairs", distractor_pairs}};
  }
};

inline AggregateMetrics aggregate_metrics(const std::vector<InducedMetrics> &all, const GoldMap &gold) {
  if (all.empty()) throw Error(ErrorCode::missing_gold, "no metrics to aggregate");
  AggregateMetrics out;
  for (const auto &im : all) {
    const auto it = gold.find(im.question_id);
    if (it == gold.end()) throw Error(ErrorCode::missing_gold, im.question_id);
    const std::size_t g = it->second;
    ++out.questions;
    out.mu_gold += im.mu[g];
    out.sigma_gold += im.sigma[g];
    out.omega_gold += im.omega[g];
    for (std::size_t a = 0; a < im.mu.size(); ++a) {
      if (a == g) continue;
      ++out.distractor_pairs;
      out.mu_distractor += im.mu[a];
      out.sigma_distractor += im.sigma[a];
      out.omega_distractor += im.omega[a];
    }
  }
  const auto nq = static_cast<double>(out.questions);
  out.mu_gold /= nq;
  out.sigma_gold /= nq;
  out.omega_gold /= nq;
  if (out.distractor_pairs > 0) {
    const auto nd = static_cast<double>(out.distractor_pairs);
    out.mu_distractor /= nd;
    out.sigma_distractor /= nd;
    out.omega_distractor /= nd;
  }
  return out;
}

enum class FlipLabel { rectified, misled, unchanged_correct, unchanged_wrong };

inline std::string_view to_string(FlipLabel l) {
  switch (l) {
  case FlipLabel::rectified: return "rectified";
  case FlipLabel::misled: return "misled";
  case FlipLabel::unchanged_correct: return "unchanged-correct";
  case FlipLabel::unchanged_wrong: return "unchanged-wrong";
  }
  return "unchanged-wrong";
}

inline FlipLabel flip_label_from_string(std::string_view s) {
  for (auto l : {FlipLabel::rectified, FlipLabel::misled, FlipLabel::unchanged_correct,
                 FlipLabel::unchanged_wrong})
    if (to_string(l) == s) return l;
  throw Error(ErrorCode::parse_error, "unknown flip label '" + std::string(s) + "'");
}

struct FlipReport {
  std::map<std::string, FlipLabel> labels;
  std::size_t rectified = 0;
  std::size_t misled = 0;
  std::size_t unchanged_correct = 0;
  std::size_t unchanged_wrong = 0;

  std::size_t total() const { return rectified + misled + unchanged_correct + unchanged_wrong; }
};

inline FlipReport classify_flips(const std::vector<PredictionRecord> &vanilla,
                                 const std::vector<PredictionRecord> &prompted, const GoldMap &gold) {
  std::map<std::string, std::size_t> before;
  for (const auto &p : vanilla) before[p.question_id] = p.predicted_index;
  std::set<std::string> after_ids;
  for (const auto &p : prompted) after_ids.insert(p.question_id);
  if (before.size() != vanilla.size() || after_ids.size() != prompted.size() ||
      before.size() != after_ids.size())
    throw Error(ErrorCode::question_set_mismatch, "prediction lists differ in question set");
  FlipReport report;
  for (const auto &p : prompted) {
    const auto b = before.find(p.question_id);
    if (b == before.end()) throw Error(ErrorCode::question_set_mismatch, p.question_id);
    const auto g = gold.find(p.question_id);
    if (g == gold.end()) throw Error(ErrorCode::missing_gold, p.question_id);
    const bool was = b->second == g->second;
    const bool now = p.predicted_index == g->second;
    FlipLabel label = was ? (now ? FlipLabel::unchanged_correct : FlipLabel::misled)
                          : (now ? FlipLabel::rectified : FlipLabel::unchanged_wrong);
    report.labels[p.question_id] = label;
    switch (label) {
    case FlipLabel::rectified: ++report.rectified; break;
    case FlipLabel::misled: ++report.misled; break;
    case FlipLabel::unchanged_correct: ++report.unchanged_correct; break;
    case FlipLabel::unchanged_wrong: ++report.unchanged_wrong; break;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Human evaluation

/// What an annotator sees. Deliberately carries no flip label and no scores.
struct WorklistItem {
  std::string knowledge_id;
  std::string question_id;
  std::string question;
  std::vector<std::string> choices;
  std::string knowledge;

  Json to_json() const {
    return {{"knowledge_id", knowledge_id}, {"question_id", question_id}, {"question", question},
            {"choices", choices},           {"knowledge", knowledge}};
  }
  static WorklistItem from_json(const Json &j) {
    return {j.at("knowledge_id").get<std::string>(), j.at("question_id").get<std::string>(),
            j.at("question").get<std::string>(), j.at("choices").get<std::vector<std::string>>(),
            j.at("knowledge").get<std::string>()};
  }
};

struct AnnotationSample {
  std::vector<WorklistItem> worklist;
  std::map<std::string, FlipLabel> key; // knowledge_id -> flip label, kept apart from the worklist
};

inline std::string knowledge_id(const std::string &question_id, std::size_t m) {
  return question_id + "#k" + std::to_string(m);
}

namespace detail {

struct Candidate {
  std::string question_id;
  std::size_t m;
  FlipLabel label;
};

inline AnnotationSample draw_annotation_sample(std::vector<Candidate> candidates, std::size_t cap,
                                               std::uint64_t seed, const Dataset &questions,
                                               const std::map<std::string, KnowledgeSet> &knowledge) {
  Rng rng(seed);
  std::vector<Candidate> chosen;
  for (auto label : {FlipLabel::rectified, FlipLabel::misled}) {
    std::vector<Candidate> pool;
    for (const auto &c : candidates)
      if (c.label == label) pool.push_back(c);
    shuffle(pool, rng);
    if (pool.size() > cap) pool.resize(cap);
    chosen.insert(chosen.end(), pool.begin(), pool.end());
  }
  shuffle(chosen, rng);
  AnnotationSample sample;
  for (const auto &c : chosen) {
    const auto *q = questions.find(c.question_id);
    const auto ks = knowledge.find(c.question_id);
    if (!q || ks == knowledge.end() || c.m == 0 || c.m > ks->second.statements.size())
      throw Error(ErrorCode::id_mismatch, c.question_id + ": selected knowledge not found");
    const auto id = knowledge_id(c.question_id, c.m);
    sample.worklist.push_back({id, q->id, q->text, q->choices, ks->second.statements[c.m - 1].text});
    sample.key[id] = c.label;
  }
  return sample;
}

} // namespace detail

/// Up to `cap` selected statements per flip direction, seeded, blinded.
/// Questions whose prediction selected no knowledge are not eligible.
inline AnnotationSample sample_for_annotation(const FlipReport &flips,
                                              const std::vector<PredictionRecord> &prompted,
                                              const Dataset &questions,
                                              const std::map<std::string, KnowledgeSet> &knowledge,
                                              std::size_t cap, std::uint64_t seed) {
  std::vector<detail::Candidate> candidates;
  for (const auto &p : prompted) {
    const auto it = flips.labels.find(p.question_id);
    if (it == flips.labels.end() || !p.selected_m) continue;
    if (it->second != FlipLabel::rectified && it->second != FlipLabel::misled) continue;
    candidates.push_back({p.question_id, *p.selected_m, it->second});
  }
  return detail::draw_annotation_sample(std::move(candidates), cap, seed, questions, knowledge);
}

/// The same flow over one random non-selected statement per flipped question.
inline AnnotationSample sample_nonselected_for_annotation(
    const FlipReport &flips, const std::vector<PredictionRecord> &prompted, const Dataset &questions,
    const std::map<std::string, KnowledgeSet> &knowledge, std::size_t cap, std::uint64_t seed) {
  Rng pick(derive_seed(seed, "nonselected"));
  std::vector<detail::Candidate> candidates;
  for (const auto &p : prompted) {
    const auto it = flips.labels.find(p.question_id);
    const auto ks = knowledge.find(p.question_id);
    if (it == flips.labels.end() || !p.selected_m || ks == knowledge.end()) continue;
    if (it->second != FlipLabel::rectified && it->second != FlipLabel::misled) continue;
    const std::size_t M = ks->second.statements.size();
    if (M < 2) continue;
    std::size_t m = 1 + static_cast<std::size_t>(uniform_below(pick, M - 1));
    if (m >= *p.selected_m) ++m;
    candidates.push_back({p.question_id, m, it->second});
  }
  return detail::draw_annotation_sample(std::move(candidates), cap, seed, questions, knowledge);
}

enum class Helpfulness { helpful, harmful, neutral };

inline std::string_view to_string(Helpfulness h) {
  switch (h) {
  case Helpfulness::helpful: return "helpful";
  case Helpfulness::harmful: return "harmful";
  case Helpfulness::neutral: return "neutral";
  }
  return "neutral";
}

inline std::optional<Helpfulness> helpfulness_from_string(std::string_view s) {
  for (auto h : {Helpfulness::helpful, Helpfulness::harmful, Helpfulness::neutral})
    if (to_string(h) == s) return h;
  return std::nullopt;
}

struct AnnotationRecord {
  std::string knowledge_id;
  std::string annotator_id;
  bool grammatical = false;
  bool relevant = false;
  bool factual = false;
  Helpfulness helpfulness = Helpfulness::neutral;

  bool operator==(const AnnotationRecord &) const = default;

  Json to_json() const {
    return {{"knowledge_id", knowledge_id}, {"annotator_id", annotator_id},
            {"grammatical", grammatical},   {"relevant", relevant},
            {"factual", factual},           {"helpfulness", to_string(helpfulness)}};
  }
  static AnnotationRecord from_json(const Json &j) {
    const auto h = helpfulness_from_string(j.at("helpfulness").get<std::string>());
    if (!h) throw Error(ErrorCode::parse_error, "bad helpfulness label");
    return {j.at("knowledge_id").get<std::string>(), j.at("annotator_id").get<std::string>(),
            j.at("grammatical").get<bool>(),         j.at("relevant").get<bool>(),
            j.at("factual").get<bool>(),             *h};
  }
};

/// Fleiss' kappa from per-item category counts. Every item must be rated by
/// the same number n >= 2 of raters.
inline double fleiss_kappa(const std::vector<std::vector<std::size_t>> &counts) {
  if (counts.empty()) throw Error(ErrorCode::invalid_argument, "no rated items");
  const std::size_t k = counts.front().size();
  if (k < 2) throw Error(ErrorCode::invalid_argument, "need at least two categories");
  std::size_t n = 0;
  for (auto c : counts.front()) n += c;
  if (n < 2) throw Error(ErrorCode::unequal_rater_counts, "need at least two raters per item");
  const auto N = static_cast<double>(counts.size());
  const auto nd = static_cast<double>(n);
  std::vector<double> column(k, 0.0);
  double p_bar = 0.0;
  for (const auto &row : counts) {
    if (row.size() != k) throw Error(ErrorCode::invalid_argument, "ragged rating table");
    std::size_t raters = 0;
    double squares = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      raters += row[j];
      squares += static_cast<double>(row[j]) * static_cast<double>(row[j]);
      column[j] += static_cast<double>(row[j]);
    }
    if (raters != n) throw Error(ErrorCode::unequal_rater_counts, "items rated by different rater counts");
    p_bar += (squares - nd) / (nd * (nd - 1.0));
  }
  p_bar /= N;
  double p_e = 0.0;
  for (double c : column) {
    const double pj = c / (N * nd);
    p_e += pj * pj;
  }
  if (p_e >= 1.0) {
    if (p_bar >= 1.0) return 1.0;
    throw Error(ErrorCode::degenerate_chance_agreement, "chance agreement is 1");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

inline constexpr std::array<std::string_view, 4> kAnnotationAxes{"grammatical", "relevant", "factual",
                                                                "helpfulness"};

/// Category index of a record on one axis (booleans: 0 false, 1 true).
inline std::size_t axis_category(const AnnotationRecord &r, std::size_t axis) {
  switch (axis) {
  case 0: return r.grammatical ? 1 : 0;
  case 1: return r.relevant ? 1 : 0;
  case 2: return r.factual ? 1 : 0;
  default: return static_cast<std::size_t>(r.helpfulness);
  }
}

inline std::size_t axis_categories(std::size_t axis) { return axis == 3 ? 3 : 2; }

struct AgreementReport {
  std::size_t items = 0;
  std::size_t raters = 0;
  std::array<std::optional<double>, 4> per_axis{};
  std::optional<double> pooled;
};

/// Kappa per axis and pooled over axes, on the items every annotator rated.
/// An axis whose chance agreement is degenerate is reported as absent.
inline AgreementReport annotation_agreement(const std::vector<std::vector<AnnotationRecord>> &by_annotator) {
  AgreementReport out;
  out.raters = by_annotator.size();
  if (out.raters < 2) throw Error(ErrorCode::unequal_rater_counts, "need at least two annotators");
  std::vector<std::map<std::string, AnnotationRecord>> index(out.raters);
  for (std::size_t r = 0; r < out.raters; ++r)
    for (const auto &rec : by_annotator[r]) index[r][rec.knowledge_id] = rec;
  std::vector<std::string> shared;
  for (const auto &[id, _] : index[0]) {
    bool everywhere = true;
    for (std::size_t r = 1; r < out.raters; ++r) everywhere = everywhere && index[r].contains(id);
    if (everywhere) shared.push_back(id);
  }
  out.items = shared.size();
  if (shared.empty()) return out;
  std::size_t pooled_offset[4] = {0, 2, 4, 6};
  std::vector<std::vector<std::size_t>> pooled;
  for (std::size_t axis = 0; axis < 4; ++axis) {
    std::vector<std::vector<std::size_t>> table;
    for (const auto &id : shared) {
      std::vector<std::size_t> row(axis_categories(axis), 0);
      std::vector<std::size_t> prow(9, 0);
      for (std::size_t r = 0; r < out.raters; ++r) {
        const auto c = axis_category(index[r].at(id), axis);
        ++row[c];
        ++prow[pooled_offset[axis] + c];
      }
      table.push_back(std::move(row));
      pooled.push_back(std::move(prow));
    }
    try {
      out.per_axis[axis] = fleiss_kappa(table);
    } catch (const Error &e) {
      if (e.code() != ErrorCode::degenerate_chance_agreement) throw;
    }
  }
  try {
    out.pooled = fleiss_kappa(pooled);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::degenerate_chance_agreement) throw;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Knowledge quantity

struct SweepPoint {
  std::size_t M = 0;
  double accuracy = 0.0;

  bool operator==(const SweepPoint &) const = default;
};

inline void check_sweep_values(const std::vector<std::size_t> &M_values) {
  if (M_values.empty()) throw Error(ErrorCode::invalid_argument, "empty M list");
  for (std::size_t i = 1; i < M_values.size(); ++i)
    if (M_values[i] <= M_values[i - 1])
      throw Error(ErrorCode::invalid_argument, "M values must be strictly increasing");
}

/// Accuracy per M using only the first M knowledge rows of each matrix.
/// Rows are scored independently, so truncating a full matrix equals
/// rebuilding it from the first M statements.
inline std::vector<SweepPoint> sweep_matrices(const std::vector<ScoreMatrix> &matrices,
                                              const GoldMap &gold,
                                              const std::vector<std::size_t> &M_values,
                                              AggregationMethod method) {
  check_sweep_values(M_values);
  std::vector<SweepPoint> out;
  for (const auto M : M_values) {
    std::vector<PredictionRecord> preds;
    for (const auto &m : matrices) preds.push_back(aggregate(m.truncated(M), method));
    out.push_back({M, accuracy(preds, gold)});
  }
  return out;
}

inline std::vector<SweepPoint> quantity_sweep(const std::vector<QuestionRecord> &questions,
                                              const std::map<std::string, KnowledgeSet> &knowledge,
                                              const std::vector<std::size_t> &M_values,
                                              AggregationMethod method, Backend &backend,
                                              ScoringMode mode, std::size_t workers = 1) {
  check_sweep_values(M_values);
  const std::size_t largest = M_values.back();
  std::vector<ScoreMatrix> matrices;
  for (const auto &q : questions) {
    const auto it = knowledge.find(q.id);
    const KnowledgeSet ks = it == knowledge.end() ? KnowledgeSet{q.id, {}, 1} : it->second.truncated(largest);
    matrices.push_back(build_score_matrix(backend, q, ks, mode, workers));
  }
  return sweep_matrices(matrices, gold_map(questions), M_values, method);
}

} // namespace gkp
