#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gkp/analysis.hpp"
#include "gkp/backends/config.hpp"
#include "gkp/inference.hpp"
#include "gkp/knowledge.hpp"
#include "gkp/parallel.hpp"
#include "gkp/store.hpp"
#include "gkp/tasks.hpp"
#include "gkp/theory.hpp"

namespace gkp {

/// Everything a run needs. Unset M / max_tokens / mode fall back to the
/// task profile.
struct RunConfig {
  Task task = Task::custom;
  std::string dataset;
  std::string template_path;
  BackendConfig generator;
  BackendConfig inference;
  std::optional<int> M;
  SamplingParams sampling{64, 0.5, 1.0, {"\n"}, std::nullopt};
  std::optional<int> max_tokens;
  AggregationMethod method = AggregationMethod::max;
  std::optional<ScoringMode> mode;
  std::string knowledge_source = "generated"; // generated | random | context | answer | external:<path>
  std::size_t parallelism = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string cache_dir;                      // empty: GKP_CACHE_DIR or default; "none": disabled
  std::size_t annotation_cap = 50;

  int effective_M() const { return M.value_or(task_profile(task).M); }
  ScoringMode effective_mode() const { return mode.value_or(default_scoring_mode(task)); }

  SamplingParams effective_sampling() const {
    SamplingParams p = sampling;
    p.max_tokens = max_tokens.value_or(task_profile(task).max_tokens);
    p.seed = seed;
    return p;
  }

  KnowledgeSource source() const {
    if (knowledge_source.rfind("external:", 0) == 0) return KnowledgeSource::external;
    return knowledge_source_from_string(knowledge_source);
  }

  std::string external_path() const {
    return source() == KnowledgeSource::external ? knowledge_source.substr(9) : std::string{};
  }

  std::filesystem::path output() const { return output_dir; }

  void validate(bool needs_template = false) const {
    auto require_file = [](const std::string &p, const char *what) {
      if (p.empty()) throw Error(ErrorCode::config, std::string(what) + " path is not set");
      if (!std::filesystem::exists(p)) throw Error(ErrorCode::config, std::string(what) + " not found: " + p);
    };
    require_file(dataset, "dataset");
    if (M && *M < 0) throw Error(ErrorCode::config, "M must be >= 0");
    if (max_tokens && *max_tokens < 1) throw Error(ErrorCode::config, "max_tokens must be >= 1");
    if (parallelism < 1) throw Error(ErrorCode::config, "parallelism must be >= 1");
    try {
      effective_sampling().validate();
    } catch (const Error &e) {
      throw Error(ErrorCode::config, e.what());
    }
    const auto src = source();
    if (needs_template && (src == KnowledgeSource::generated || src == KnowledgeSource::answer))
      require_file(template_path, "template");
    if (src == KnowledgeSource::external) require_file(external_path(), "external knowledge file");
    for (const auto *b : {&generator, &inference})
      if (b->kind != BackendKind::wire && !b->path.empty()) require_file(b->path, "backend file");
  }

  Json to_json() const {
    Json s{{"top_p", sampling.top_p}, {"temperature", sampling.temperature}, {"stop", sampling.stop_sequences}};
    s["max_tokens"] = max_tokens ? Json(*max_tokens) : Json(nullptr);
    Json j{{"task", to_string(task)},
           {"dataset", dataset},
           {"template", template_path},
           {"generator", generator.to_json()},
           {"inference", inference.to_json()},
           {"sampling", s},
           {"method", to_string(method)},
           {"knowledge_source", knowledge_source},
           {"parallelism", parallelism},
           {"seed", seed},
           {"output_dir", output_dir},
           {"cache_dir", cache_dir},
           {"annotation_cap", annotation_cap}};
    j["M"] = M ? Json(*M) : Json(nullptr);
    j["mode"] = mode ? Json(to_string(*mode)) : Json(nullptr);
    return j;
  }

  /// Reads a config object, or the "config" member of a run manifest.
  static RunConfig from_json(const Json &in) {
    const Json &j = in.contains("config") && in["config"].is_object() ? in["config"] : in;
    RunConfig c;
    try {
      if (j.contains("task")) c.task = task_from_string(j["task"].get<std::string>());
      c.dataset = j.value("dataset", c.dataset);
      c.template_path = j.value("template", c.template_path);
      if (j.contains("generator")) c.generator = BackendConfig::from_json(j["generator"]);
      if (j.contains("inference")) c.inference = BackendConfig::from_json(j["inference"]);
      if (j.contains("M") && !j["M"].is_null()) c.M = j["M"].get<int>();
      if (j.contains("sampling")) {
        const auto &s = j["sampling"];
        c.sampling.top_p = s.value("top_p", c.sampling.top_p);
        c.sampling.temperature = s.value("temperature", c.sampling.temperature);
        if (s.contains("stop")) c.sampling.stop_sequences = s["stop"].get<std::vector<std::string>>();
        if (s.contains("max_tokens") && !s["max_tokens"].is_null()) c.max_tokens = s["max_tokens"].get<int>();
      }
      if (j.contains("method")) c.method = aggregation_method_from_string(j["method"].get<std::string>());
      if (j.contains("mode") && !j["mode"].is_null())
        c.mode = scoring_mode_from_string(j["mode"].get<std::string>());
      c.knowledge_source = j.value("knowledge_source", c.knowledge_source);
      c.parallelism = j.value("parallelism", c.parallelism);
      c.seed = j.value("seed", c.seed);
      c.output_dir = j.value("output_dir", c.output_dir);
      c.cache_dir = j.value("cache_dir", c.cache_dir);
      c.annotation_cap = j.value("annotation_cap", c.annotation_cap);
    } catch (const Json::exception &e) {
      throw Error(ErrorCode::config, e.what());
    }
    return c;
  }
};

inline RunManifest make_manifest(const RunConfig &config, const Dataset &dataset) {
  RunManifest m;
  m.config = config.to_json();
  m.config["effective"] = {{"M", config.effective_M()},
                           {"mode", to_string(config.effective_mode())},
                           {"sampling", config.effective_sampling().to_json()}};
  m.run_id = sha256_hex(m.config.dump()).substr(0, 16);
  m.datasets.push_back(dataset.manifest.to_json());
  if (!config.template_path.empty() && std::filesystem::exists(config.template_path))
    m.templates[config.template_path] = load_template(config.template_path).digest();
  m.seed = config.seed;
  return m;
}

/// Opens the cache named by the config; nullptr when caching is disabled.
inline std::shared_ptr<Cache> open_cache(const RunConfig &config) {
  if (config.cache_dir == "none") return nullptr;
  return std::make_shared<Cache>(config.cache_dir.empty() ? Cache::default_root() : std::filesystem::path(config.cache_dir));
}

inline std::vector<const QuestionRecord *> sorted_questions(const Dataset &dataset) {
  std::vector<const QuestionRecord *> out;
  for (const auto &q : dataset.records) out.push_back(&q);
  std::sort(out.begin(), out.end(), [](auto *a, auto *b) { return a->id < b->id; });
  return out;
}

// ---------------------------------------------------------------------------
// knowledge

/// Knowledge sets for every question, sorted by question id. M = 0 gives
/// empty sets.
inline std::vector<KnowledgeSet> run_knowledge(const RunConfig &config, Backend &generator,
                                               const Dataset &dataset) {
  const auto questions = sorted_questions(dataset);
  const int M = config.effective_M();
  const auto params = config.effective_sampling();
  std::vector<KnowledgeSet> sets(questions.size());
  if (M == 0) {
    for (std::size_t i = 0; i < questions.size(); ++i) sets[i] = {questions[i]->id, {}, 1};
    return sets;
  }
  const auto source = config.source();
  std::optional<PromptTemplate> tmpl;
  if (source == KnowledgeSource::generated || source == KnowledgeSource::answer)
    tmpl = load_template(config.template_path);
  if (source == KnowledgeSource::external) {
    const ExternalStatements external(config.external_path());
    for (std::size_t i = 0; i < questions.size(); ++i) sets[i] = external.get(questions[i]->id).truncated(
        static_cast<std::size_t>(M));
    return sets;
  }
  if (source == KnowledgeSource::random) {
    const auto shared = sample_random_statements("", M, params, generator);
    for (std::size_t i = 0; i < questions.size(); ++i) {
      sets[i] = shared;
      sets[i].question_id = questions[i]->id;
    }
    return sets;
  }
  parallel_for(questions.size(), config.parallelism, [&](std::size_t i) {
    const auto &q = *questions[i];
    switch (source) {
    case KnowledgeSource::generated: sets[i] = sample_knowledge(q, *tmpl, M, params, generator); break;
    case KnowledgeSource::context: sets[i] = sample_context_statements(q, M, params, generator); break;
    case KnowledgeSource::answer: sets[i] = sample_answer_statements(q, *tmpl, M, params, generator); break;
    default: break;
    }
  });
  return sets;
}

inline void write_knowledge(const std::filesystem::path &path, const std::vector<KnowledgeSet> &sets) {
  std::vector<Json> lines;
  for (const auto &s : sets) lines.push_back(s.to_json());
  write_jsonl(path, lines);
}

inline std::map<std::string, KnowledgeSet> read_knowledge(const std::filesystem::path &path) {
  std::map<std::string, KnowledgeSet> out;
  for (const auto &[line, value] : read_jsonl(path)) {
    try {
      auto set = KnowledgeSet::from_json(value);
      out[set.question_id] = std::move(set);
    } catch (const Json::exception &e) {
      throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

inline std::filesystem::path cmd_knowledge(const RunConfig &config, Backend &generator) {
  config.validate(true);
  const auto dataset = load_dataset(config.dataset, config.task);
  const auto sets = run_knowledge(config, generator, dataset);
  const auto path = config.output() / "knowledge.jsonl";
  write_knowledge(path, sets);
  write_manifest(config.output(), make_manifest(config, dataset));
  return path;
}

// ---------------------------------------------------------------------------
// infer

/// Scores, configured-method prediction and vanilla prediction for one question.
struct QuestionResult {
  ScoreMatrix matrix;
  PredictionRecord prediction;
  PredictionRecord vanilla;
  std::vector<std::string> statements;

  Json to_json() const {
    Json j{{"question_id", matrix.question_id},
           {"matrix", matrix.to_json()},
           {"prediction", prediction.to_json()},
           {"vanilla", vanilla.to_json()},
           {"statements", statements},
           {"predicted_choice", matrix.choice_labels[prediction.predicted_index]},
           {"vanilla_choice", matrix.choice_labels[vanilla.predicted_index]}};
    j["selected_knowledge"] =
        prediction.selected_m ? Json(statements[*prediction.selected_m - 1]) : Json(nullptr);
    return j;
  }

  static QuestionResult from_json(const Json &j) {
    return {ScoreMatrix::from_json(j.at("matrix")), PredictionRecord::from_json(j.at("prediction")),
            PredictionRecord::from_json(j.at("vanilla")),
            j.at("statements").get<std::vector<std::string>>()};
  }
};

inline QuestionResult infer_question(Backend &inference, const QuestionRecord &q, const KnowledgeSet &knowledge,
                                     ScoringMode mode, AggregationMethod method, std::size_t workers) {
  QuestionResult r;
  r.matrix = build_score_matrix(inference, q, knowledge, mode, workers);
  r.prediction = aggregate(r.matrix, method);
  r.vanilla = aggregate(r.matrix.truncated(0), method);
  r.statements = knowledge.texts();
  return r;
}

/// `on_result` sees each question as soon as it is scored, in id order.
inline std::vector<QuestionResult>
run_infer(const RunConfig &config, Backend &inference, const Dataset &dataset,
          const std::map<std::string, KnowledgeSet> &knowledge,
          const std::function<void(const QuestionResult &)> &on_result = {}) {
  for (const auto &[id, _] : knowledge)
    if (!dataset.find(id)) throw Error(ErrorCode::id_mismatch, "knowledge for unknown question " + id);
  const auto M = static_cast<std::size_t>(config.effective_M());
  std::vector<QuestionResult> results;
  for (const auto *q : sorted_questions(dataset)) {
    const auto it = knowledge.find(q->id);
    const KnowledgeSet ks = it == knowledge.end() ? KnowledgeSet{q->id, {}, 1} : it->second.truncated(M);
    results.push_back(infer_question(inference, *q, ks, config.effective_mode(), config.method, config.parallelism));
    if (on_result) on_result(results.back());
  }
  return results;
}

inline void write_predictions(const std::filesystem::path &path, const std::vector<QuestionResult> &results) {
  std::vector<Json> lines;
  for (const auto &r : results) lines.push_back(r.to_json());
  write_jsonl(path, lines);
}

inline std::vector<QuestionResult> read_predictions(const std::filesystem::path &path) {
  std::vector<QuestionResult> out;
  for (const auto &[line, value] : read_jsonl(path)) {
    try {
      out.push_back(QuestionResult::from_json(value));
    } catch (const Json::exception &e) {
      throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

/// With no knowledge file every question runs vanilla-only.
inline std::filesystem::path cmd_infer(const RunConfig &config, Backend &inference,
                                       const std::optional<std::filesystem::path> &knowledge_path) {
  config.validate();
  const auto dataset = load_dataset(config.dataset, config.task);
  const auto knowledge = knowledge_path ? read_knowledge(*knowledge_path) : std::map<std::string, KnowledgeSet>{};
  const auto path = config.output() / "predictions.jsonl";
  std::filesystem::create_directories(config.output());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  run_infer(config, inference, dataset, knowledge,
            [&](const QuestionResult &r) { out << r.to_json().dump() << "\n" << std::flush; });
  if (!out) throw Error(ErrorCode::io_error, "short write " + path.string());
  write_manifest(config.output(), make_manifest(config, dataset));
  return path;
}

// ---------------------------------------------------------------------------
// evaluate

inline std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_number(double v) { return Json(v).dump(); }

struct RunReport {
  std::vector<Json> per_question;
  std::vector<std::pair<std::string, Json>> summary;
  std::vector<std::vector<std::string>> qualitative; // header first
  AnnotationSample selected;
  AnnotationSample nonselected;
  FlipReport flips;

  const Json &summary_value(const std::string &name) const {
    for (const auto &[k, v] : summary)
      if (k == name) return v;
    throw Error(ErrorCode::invalid_argument, "no summary metric " + name);
  }

  std::string summary_csv() const {
    std::string out = "metric,value\n";
    for (const auto &[k, v] : summary) out += k + "," + (v.is_string() ? csv_field(v.get<std::string>()) : v.dump()) + "\n";
    return out;
  }

  std::string qualitative_csv() const {
    std::string out;
    for (const auto &row : qualitative) {
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(row[i]);
      out += "\n";
    }
    return out;
  }
};

namespace detail {

inline std::vector<Json> key_lines(const AnnotationSample &s) {
  std::vector<Json> lines;
  for (const auto &[id, label] : s.key) lines.push_back({{"knowledge_id", id}, {"flip", to_string(label)}});
  return lines;
}

inline std::vector<Json> worklist_lines(const AnnotationSample &s) {
  std::vector<Json> lines;
  for (const auto &item : s.worklist) lines.push_back(item.to_json());
  return lines;
}

} // namespace detail

inline RunReport build_report(const RunConfig &config, const Dataset &dataset, std::vector<QuestionResult> results) {
  std::sort(results.begin(), results.end(),
            [](const auto &a, const auto &b) { return a.matrix.question_id < b.matrix.question_id; });
  const GoldMap gold = gold_map(dataset.records);
  if (results.empty()) throw Error(ErrorCode::missing_gold, "no predictions");
  std::vector<PredictionRecord> prompted, vanilla;
  std::vector<InducedMetrics> knowledge_metrics, vanilla_metrics;
  std::map<std::string, KnowledgeSet> knowledge;
  for (const auto &r : results) {
    const auto *q = dataset.find(r.matrix.question_id);
    if (!q) throw Error(ErrorCode::id_mismatch, "prediction for unknown question " + r.matrix.question_id);
    if (!gold.contains(q->id)) throw Error(ErrorCode::missing_gold, q->id);
    prompted.push_back(r.prediction);
    vanilla.push_back(r.vanilla);
    knowledge_metrics.push_back(induced_metrics(r.matrix));
    vanilla_metrics.push_back(induced_metrics(r.matrix.truncated(0)));
    KnowledgeSet ks{q->id, {}, std::max<std::size_t>(r.statements.size(), 1)};
    for (const auto &t : r.statements) ks.statements.push_back({t, KnowledgeSource::generated, {}});
    knowledge[q->id] = std::move(ks);
  }

  RunReport report;
  report.flips = classify_flips(vanilla, prompted, gold);

  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto &r = results[i];
    const auto g = gold.at(r.matrix.question_id);
    const auto &im = knowledge_metrics[i];
    Json line{{"question_id", r.matrix.question_id},
              {"gold_index", g},
              {"vanilla_index", r.vanilla.predicted_index},
              {"predicted_index", r.prediction.predicted_index},
              {"vanilla_correct", r.vanilla.predicted_index == g},
              {"prompted_correct", r.prediction.predicted_index == g},
              {"flip", to_string(report.flips.labels.at(r.matrix.question_id))},
              {"vanilla_row", r.matrix.rows.front()},
              {"mu", im.mu},
              {"sigma", im.sigma},
              {"omega", im.omega}};
    line["selected_m"] = r.prediction.selected_m ? Json(*r.prediction.selected_m) : Json(nullptr);
    report.per_question.push_back(std::move(line));
  }

  const auto n = results.size();
  const auto correct_vanilla = count_correct(vanilla, gold);
  const auto correct_prompted = count_correct(prompted, gold);
  auto &s = report.summary;
  s.emplace_back("questions", n);
  s.emplace_back("method", to_string(config.method));
  s.emplace_back("accuracy_vanilla", static_cast<double>(correct_vanilla) / static_cast<double>(n));
  s.emplace_back("accuracy_prompted", static_cast<double>(correct_prompted) / static_cast<double>(n));
  s.emplace_back("accuracy_delta", (static_cast<double>(correct_prompted) - static_cast<double>(correct_vanilla)) /
                                       static_cast<double>(n));
  for (auto m : {AggregationMethod::max, AggregationMethod::moe, AggregationMethod::poe}) {
    std::vector<PredictionRecord> preds;
    for (const auto &r : results) preds.push_back(aggregate(r.matrix, m));
    s.emplace_back("accuracy_" + std::string(to_string(m)), accuracy(preds, gold));
  }
  const auto agg_k = aggregate_metrics(knowledge_metrics, gold);
  const auto agg_v = aggregate_metrics(vanilla_metrics, gold);
  for (const auto &[prefix, agg] : {std::pair{"knowledge", agg_k}, std::pair{"vanilla", agg_v}}) {
    const std::string p = prefix;
    s.emplace_back(p + "_mu_gold", agg.mu_gold);
    s.emplace_back(p + "_mu_distractor", agg.mu_distractor);
    s.emplace_back(p + "_sigma_gold", agg.sigma_gold);
    s.emplace_back(p + "_sigma_distractor", agg.sigma_distractor);
    s.emplace_back(p + "_omega_gold", agg.omega_gold);
    s.emplace_back(p + "_omega_distractor", agg.omega_distractor);
  }
  s.emplace_back("rectified", report.flips.rectified);
  s.emplace_back("misled", report.flips.misled);
  s.emplace_back("unchanged_correct", report.flips.unchanged_correct);
  s.emplace_back("unchanged_wrong", report.flips.unchanged_wrong);

  // The summary must be derivable from the per-question lines.
  std::size_t line_correct = 0;
  for (const auto &line : report.per_question) line_correct += line["prompted_correct"].get<bool>() ? 1 : 0;
  if (line_correct != correct_prompted)
    throw Error(ErrorCode::invariant_violation, "summary accuracy disagrees with per-question lines");

  struct Row {
    double swing;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
  for (const auto &r : results) {
    if (!r.prediction.selected_m) continue;
    const auto *q = dataset.find(r.matrix.question_id);
    const auto g = gold.at(q->id);
    const auto &selected_row = r.matrix.rows[*r.prediction.selected_m];
    const auto &vanilla_row = r.matrix.rows.front();
    const double swing = selected_row[g] - vanilla_row[g];
    rows.push_back({swing,
                    {q->id, q->text, r.statements[*r.prediction.selected_m - 1], q->choices[g],
                     q->choices[r.vanilla.predicted_index], csv_number(vanilla_row[g]),
                     csv_number(vanilla_row[r.vanilla.predicted_index]), q->choices[r.prediction.predicted_index],
                     csv_number(selected_row[g]), csv_number(swing),
                     std::string(to_string(report.flips.labels.at(q->id)))}});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) { return a.swing > b.swing; });
  report.qualitative.push_back({"question_id", "question", "selected_knowledge", "gold", "vanilla_prediction",
                                "vanilla_gold_score", "vanilla_prediction_score", "prompted_prediction",
                                "prompted_gold_score", "swing", "flip"});
  for (auto &row : rows) report.qualitative.push_back(std::move(row.cells));

  const auto annotation_seed = derive_seed(config.seed, "annotation");
  report.selected = sample_for_annotation(report.flips, prompted, dataset, knowledge, config.annotation_cap,
                                          annotation_seed);
  report.nonselected = sample_nonselected_for_annotation(report.flips, prompted, dataset, knowledge,
                                                         config.annotation_cap, annotation_seed);
  return report;
}

inline void write_report(const std::filesystem::path &dir, const RunReport &report) {
  write_jsonl(dir / "evaluation.jsonl", report.per_question);
  write_file(dir / "summary.csv", report.summary_csv());
  write_file(dir / "qualitative.csv", report.qualitative_csv());
  write_jsonl(dir / "worklist.jsonl", detail::worklist_lines(report.selected));
  write_jsonl(dir / "worklist_key.jsonl", detail::key_lines(report.selected));
  write_jsonl(dir / "worklist_nonselected.jsonl", detail::worklist_lines(report.nonselected));
  write_jsonl(dir / "worklist_nonselected_key.jsonl", detail::key_lines(report.nonselected));
}

inline RunReport cmd_evaluate(const RunConfig &config, const std::filesystem::path &predictions_path) {
  config.validate();
  const auto dataset = load_dataset(config.dataset, config.task);
  auto report = build_report(config, dataset, read_predictions(predictions_path));
  write_report(config.output(), report);
  return report;
}

// ---------------------------------------------------------------------------
// sweep

inline std::string sweep_csv(const std::vector<SweepPoint> &points) {
  std::string out = "M,accuracy\n";
  for (const auto &p : points) out += std::to_string(p.M) + "," + csv_number(p.accuracy) + "\n";
  return out;
}

inline std::vector<SweepPoint> cmd_sweep(const RunConfig &config, Backend &inference,
                                         const std::filesystem::path &knowledge_path,
                                         const std::vector<std::size_t> &M_values) {
  config.validate();
  try {
    check_sweep_values(M_values);
  } catch (const Error &e) {
    throw Error(ErrorCode::config, e.what());
  }
  const auto dataset = load_dataset(config.dataset, config.task);
  const auto knowledge = read_knowledge(knowledge_path);
  for (const auto &[id, _] : knowledge)
    if (!dataset.find(id)) throw Error(ErrorCode::id_mismatch, "knowledge for unknown question " + id);
  std::vector<QuestionRecord> questions;
  for (const auto *q : sorted_questions(dataset)) questions.push_back(*q);
  const auto points = quantity_sweep(questions, knowledge, M_values, config.method, inference,
                                     config.effective_mode(), config.parallelism);
  write_file(config.output() / "sweep.csv", sweep_csv(points));
  return points;
}

// ---------------------------------------------------------------------------
// annotation report

inline std::vector<AnnotationRecord> read_annotations(const std::filesystem::path &path) {
  std::vector<AnnotationRecord> out;
  for (const auto &[line, value] : read_jsonl(path)) {
    try {
      out.push_back(AnnotationRecord::from_json(value));
    } catch (const Json::exception &e) {
      throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

/// Agreement (per axis and pooled) plus label rates, overall and per flip
/// direction when the unblinded key is given.
inline Json annotation_report(const std::vector<std::vector<AnnotationRecord>> &by_annotator,
                              const std::map<std::string, FlipLabel> &key) {
  const auto agreement = annotation_agreement(by_annotator);
  Json kappa = Json::object();
  for (std::size_t a = 0; a < 4; ++a)
    kappa[std::string(kAnnotationAxes[a])] = agreement.per_axis[a] ? Json(*agreement.per_axis[a]) : Json(nullptr);
  kappa["pooled"] = agreement.pooled ? Json(*agreement.pooled) : Json(nullptr);

  auto rates = [&](std::optional<FlipLabel> only) {
    std::size_t n = 0, grammatical = 0, relevant = 0, factual = 0, helpful = 0, harmful = 0, neutral = 0;
    for (const auto &records : by_annotator)
      for (const auto &r : records) {
        if (only) {
          const auto it = key.find(r.knowledge_id);
          if (it == key.end() || it->second != *only) continue;
        }
        ++n;
        grammatical += r.grammatical;
        relevant += r.relevant;
        factual += r.factual;
        helpful += r.helpfulness == Helpfulness::helpful;
        harmful += r.helpfulness == Helpfulness::harmful;
        neutral += r.helpfulness == Helpfulness::neutral;
      }
    auto frac = [&](std::size_t c) { return n ? Json(static_cast<double>(c) / static_cast<double>(n)) : Json(nullptr); };
    return Json{{"labels", n},           {"grammatical", frac(grammatical)}, {"relevant", frac(relevant)},
                {"factual", frac(factual)}, {"helpful", frac(helpful)},       {"harmful", frac(harmful)},
                {"neutral", frac(neutral)}};
  };
  Json out{{"items", agreement.items}, {"raters", agreement.raters}, {"kappa", kappa}, {"all", rates(std::nullopt)}};
  if (!key.empty()) {
    out["rectified"] = rates(FlipLabel::rectified);
    out["misled"] = rates(FlipLabel::misled);
  }
  return out;
}

inline std::map<std::string, FlipLabel> read_annotation_key(const std::filesystem::path &path) {
  std::map<std::string, FlipLabel> key;
  for (const auto &[line, value] : read_jsonl(path))
    key[value.at("knowledge_id").get<std::string>()] = flip_label_from_string(value.at("flip").get<std::string>());
  return key;
}


// ---------------------------------------------------------------------------
// theory check

struct TheoryProbe {
  std::vector<std::string> x;
  std::vector<std::string> y;
  std::size_t z_length = 1;
};

inline Json probe_report(const EnumerableLM &lm, const TheoryProbe &probe) {
  const auto g = expectation_gap(lm, probe.x, probe.y, probe.z_length);
  Json j{{"x", probe.x},        {"y", probe.y},         {"z_length", probe.z_length},
         {"lhs", g.lhs},        {"rhs", g.rhs},         {"gap", g.gap},
         {"immediate", g.immediate}, {"immediate_gap", g.immediate_gap}};
  if (probe.z_length > 0) {
    const auto e = entropy_report(lm, probe.x, probe.z_length);
    j["entropy"] = {{"h_y_given_x", e.h_y_given_x},
                    {"h_y_given_zx", e.h_y_given_zx},
                    {"mutual_information", e.mutual_information},
                    {"z_mass", e.z_mass}};
  }
  return j;
}

/// Spec file: {"lm": <table>, "probes": [{"x": [...], "y": [...], "z_length": n}]}
/// and/or {"random": {"count": n, "seed": s}} for randomized toy LMs.
inline Json theory_check(const Json &spec) {
  Json out{{"probes", Json::array()}};
  double max_gap = 0.0;
  double min_mi = std::numeric_limits<double>::infinity();
  auto record = [&](Json r) {
    max_gap = std::max(max_gap, r["gap"].get<double>());
    if (r.contains("entropy")) min_mi = std::min(min_mi, r["entropy"]["mutual_information"].get<double>());
    out["probes"].push_back(std::move(r));
  };
  try {
    if (spec.contains("lm")) {
      const auto lm = EnumerableLM::from_json(spec["lm"]);
      for (const auto &p : spec.value("probes", Json::array()))
        record(probe_report(lm, {p.value("x", std::vector<std::string>{}), p.at("y").get<std::vector<std::string>>(),
                                 p.value("z_length", std::size_t{1})}));
    }
    if (spec.contains("random")) {
      const auto &r = spec["random"];
      const auto count = r.value("count", std::size_t{100});
      const auto seed = r.value("seed", std::uint64_t{0});
      for (std::size_t i = 0; i < count; ++i) {
        const auto lm = random_enumerable_lm(derive_seed(seed, "theory-lm-" + std::to_string(i)));
        Rng rng(derive_seed(seed, "theory-probe-" + std::to_string(i)));
        const auto &vocab = lm.vocabulary();
        TheoryProbe probe;
        const auto x_len = uniform_below(rng, 3);
        for (std::uint64_t k = 0; k < x_len; ++k) probe.x.push_back(vocab[uniform_below(rng, vocab.size())]);
        probe.y.push_back(vocab[uniform_below(rng, vocab.size())]);
        probe.z_length = 1 + static_cast<std::size_t>(uniform_below(rng, 3));
        try {
          auto rep = probe_report(lm, probe);
          rep["lm_index"] = i;
          record(std::move(rep));
        } catch (const Error &e) {
          if (e.code() != ErrorCode::invalid_argument) throw;
        }
      }
    }
  } catch (const Json::exception &e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
  out["max_gap"] = max_gap;
  out["min_mutual_information"] = std::isfinite(min_mi) ? Json(min_mi) : Json(nullptr);
  return out;
}

inline Json cmd_theory_check(const std::filesystem::path &spec_path, const std::filesystem::path &output_dir) {
  const auto report = theory_check(read_json_file(spec_path));
  write_file(output_dir / "theory.json", report.dump(2) + "\n");
  return report;
}

} // namespace gkp
