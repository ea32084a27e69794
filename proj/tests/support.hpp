#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <unistd.h>
#include <vector>

#include "gkp/gkp.hpp"

namespace gkp::test {

/// Directory removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gkp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Every regular file under `dir` (relative path -> bytes).
inline std::map<std::string, std::string> snapshot(const std::filesystem::path &dir) {
  std::map<std::string, std::string> out;
  for (const auto &e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
  return out;
}

inline std::shared_ptr<FixtureBackend> fixture_backend(const std::string &id = "fixture") {
  return std::make_shared<FixtureBackend>(BackendDescriptor{id, BackendKind::fixture, "scripted"});
}

inline PromptTemplate demo_template() {
  return {"custom",
          "Generate some knowledge about the input.",
          {{"Penguins have <mask> wings.", "Birds have two wings. Penguin is a kind of bird.", {}}},
          "Knowledge"};
}

// ---------------------------------------------------------------------------
// Ten-question flip scenario.
//
// Two choices per question ("alpha" gold, "beta" distractor), five
// knowledge statements each, continuation scoring. Logits are chosen so
// that under MAX:
//   q01 is rectified by statement 1, q02 by statement 2, q03 by statement 5;
//   q04 is misled by statement 1;
//   q05-q07 stay correct, q08-q10 stay wrong.
// Vanilla gets 4/10 right; with M = 5 the prompted run gets 6/10.

struct Logits {
  double alpha;
  double beta;
};

inline constexpr Logits kWrong{-2.0, -1.0};
inline constexpr Logits kRight{-1.0, -2.0};
inline constexpr Logits kStrongRight{-0.1, -3.0};
inline constexpr Logits kStrongWrong{-4.0, -0.1};
inline constexpr Logits kMildRight{-1.0, -1.5};
inline constexpr Logits kMildWrong{-1.5, -1.0};
inline constexpr Logits kNeutral{-1.0, -1.0};

struct ScenarioQuestion {
  std::string id;
  Logits vanilla;
  std::vector<Logits> rows;
};

inline std::vector<ScenarioQuestion> flip_questions() {
  const Logits N = kNeutral;
  std::vector<ScenarioQuestion> qs{
      {"q01", kWrong, {kStrongRight, N, N, N, N}},
      {"q02", kWrong, {kMildWrong, kStrongRight, N, N, N}},
      {"q03", kWrong, {N, N, N, N, kStrongRight}},
      {"q04", kRight, {kStrongWrong, N, N, N, N}},
  };
  for (const char *id : {"q05", "q06", "q07"}) qs.push_back({id, kRight, {kMildRight, N, kMildWrong, N, N}});
  for (const char *id : {"q08", "q09", "q10"}) qs.push_back({id, kWrong, {kMildRight, N, N, N, N}});
  return qs;
}

inline std::string scenario_text(const std::string &id) { return "Question " + id + " asks which letter wins?"; }

inline std::string scenario_statement(const std::string &id, std::size_t m) {
  return "Fact " + std::to_string(m) + " about " + id + ".";
}

struct Scenario {
  RunConfig config;
  std::filesystem::path dir;
};

/// Writes dataset, template and fixture script under `dir` and returns a
/// config that uses them (same fixture for generation and inference).
inline Scenario write_flip_scenario(const std::filesystem::path &dir, int M = 5) {
  const auto tmpl = demo_template();
  Json generate = Json::array();
  Json score = Json::array();
  std::vector<Json> dataset;
  for (const auto &q : flip_questions()) {
    const auto text = scenario_text(q.id);
    dataset.push_back({{"id", q.id}, {"text", text}, {"choices", {"alpha", "beta"}}, {"answer", "alpha"}});
    std::vector<std::string> statements;
    for (std::size_t m = 1; m <= q.rows.size(); ++m) statements.push_back(scenario_statement(q.id, m));
    generate.push_back({{"prompt", render_prompt(tmpl, text)}, {"texts", statements}});
    auto add = [&](const std::string &prefix, Logits l) {
      score.push_back({{"prefix", prefix}, {"continuation", "alpha"}, {"logprobs", {l.alpha}}});
      score.push_back({{"prefix", prefix}, {"continuation", "beta"}, {"logprobs", {l.beta}}});
    };
    add(text, q.vanilla);
    for (std::size_t m = 1; m <= q.rows.size(); ++m) add(statements[m - 1] + " " + text, q.rows[m - 1]);
  }
  std::filesystem::create_directories(dir);
  write_jsonl(dir / "dataset.jsonl", dataset);
  write_file(dir / "template.json", tmpl.to_json().dump(2));
  write_file(dir / "fixture.json", Json{{"generate", generate}, {"score", score}}.dump());

  Scenario s;
  s.dir = dir;
  auto &c = s.config;
  c.task = Task::custom;
  c.dataset = (dir / "dataset.jsonl").string();
  c.template_path = (dir / "template.json").string();
  c.generator = {"scripted-generator", BackendKind::fixture, "scripted", (dir / "fixture.json").string(), "", "", {}};
  c.inference = {"scripted-inference", BackendKind::fixture, "scripted", (dir / "fixture.json").string(), "", "", {}};
  c.M = M;
  c.method = AggregationMethod::max;
  c.mode = ScoringMode::continuation;
  c.seed = 7;
  c.output_dir = (dir / "out").string();
  c.cache_dir = "none";
  return s;
}

/// knowledge -> infer -> evaluate with the given backends.
inline RunReport run_pipeline(const RunConfig &config, Backend &generator, Backend &inference) {
  const auto knowledge = cmd_knowledge(config, generator);
  const auto predictions = cmd_infer(config, inference, knowledge);
  return cmd_evaluate(config, predictions);
}

inline RunReport run_pipeline(const RunConfig &config) {
  const auto generator = make_backend(config.generator);
  const auto inference = make_backend(config.inference);
  return run_pipeline(config, *generator, *inference);
}

// ---------------------------------------------------------------------------
// Case study: "Most motorcycles have <mask> tires." scored by infilling.

inline const std::string kMotorcycleQuestion = "Most motorcycles have <mask> tires.";
inline const std::string kMotorcycleKnowledge = "A motorcycle has two wheels. Each wheel has a tire.";

inline QuestionRecord motorcycle_question() {
  return {"motorcycle", Task::numersense, kMotorcycleQuestion, canonical_numersense_choices(), 3, {}};
}

/// Vanilla: two 0.32, four 0.33, the other ten share 0.35.
/// With the premise: two 0.86, four 0.14, the rest negligible.
inline FixtureScript motorcycle_script() {
  const auto q = motorcycle_question();
  FixtureScript script;
  for (std::size_t i = 0; i < q.choices.size(); ++i) {
    const auto &c = q.choices[i];
    const double vanilla = c == "two" ? 0.32 : c == "four" ? 0.33 : 0.035;
    const double prompted = c == "two" ? std::log(0.86) : c == "four" ? std::log(0.14) : -60.0;
    const auto plain = realize(q, i);
    const auto with = realize(q, i, kMotorcycleKnowledge);
    script.emplace_back(scoring_digest("", plain), scripted_scores(plain, {std::log(vanilla)}));
    script.emplace_back(scoring_digest("", with), scripted_scores(with, {prompted}));
  }
  return script;
}

inline KnowledgeSet motorcycle_knowledge() {
  return {"motorcycle", {{kMotorcycleKnowledge, KnowledgeSource::generated, {}}}, 1};
}

} // namespace gkp::test
