#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gkp/gkp.hpp"

namespace {

struct BackendFlags {
  std::optional<std::string> id, kind, model, path, url, api_path;
  std::optional<std::size_t> request_cap;

  void add(CLI::App &app, const std::string &prefix) {
    app.add_option("--" + prefix + "-id", id, prefix + " backend id");
    app.add_option("--" + prefix + "-kind", kind, "fixture | enumerable | wire");
    app.add_option("--" + prefix + "-model", model);
    app.add_option("--" + prefix + "-path", path, "fixture script or enumerable LM file");
    app.add_option("--" + prefix + "-url", url);
    app.add_option("--" + prefix + "-api-path", api_path);
    app.add_option("--" + prefix + "-request-cap", request_cap);
  }

  void apply(gkp::BackendConfig &c) const {
    if (id) c.id = *id;
    if (kind) c.kind = gkp::backend_kind_from_string(*kind);
    if (model) c.model = *model;
    if (path) c.path = *path;
    if (url) c.url = *url;
    if (api_path) c.api_path = *api_path;
    if (request_cap) c.request_cap = *request_cap;
  }
};

struct RunFlags {
  std::optional<std::string> config_file;
  std::optional<std::string> task, dataset, template_path, method, mode, knowledge_source, output_dir, cache_dir;
  std::optional<int> M, max_tokens;
  std::optional<double> top_p, temperature;
  std::optional<std::size_t> parallelism, annotation_cap;
  std::optional<std::uint64_t> seed;
  BackendFlags generator, inference;

  void add(CLI::App &app) {
    app.add_option("--config", config_file, "JSON config file or a run manifest");
    app.add_option("--task", task, "numersense | csqa | csqa2 | qasc | custom");
    app.add_option("--dataset", dataset);
    app.add_option("--template", template_path);
    app.add_option("-M,--M", M, "knowledge statements per question");
    app.add_option("--top-p", top_p);
    app.add_option("--temperature", temperature);
    app.add_option("--max-tokens", max_tokens);
    app.add_option("--method", method, "max | moe | poe");
    app.add_option("--mode", mode, "continuation | infill");
    app.add_option("--knowledge-source", knowledge_source, "generated | random | context | answer | external:<path>");
    app.add_option("--parallelism", parallelism);
    app.add_option("--seed", seed);
    app.add_option("-o,--output-dir", output_dir);
    app.add_option("--cache-dir", cache_dir, "cache root, or 'none'");
    app.add_option("--annotation-cap", annotation_cap);
    generator.add(app, "generator");
    inference.add(app, "inference");
  }

  gkp::RunConfig resolve() const {
    gkp::RunConfig c;
    if (config_file) {
      try {
        c = gkp::RunConfig::from_json(gkp::read_json_file(*config_file));
      } catch (const gkp::Error &e) {
        if (e.family() == gkp::ErrorFamily::config) throw;
        throw gkp::Error(gkp::ErrorCode::config, "cannot read config: " + std::string(e.what()));
      }
    }
    if (task) c.task = gkp::task_from_string(*task);
    if (dataset) c.dataset = *dataset;
    if (template_path) c.template_path = *template_path;
    if (M) c.M = *M;
    if (top_p) c.sampling.top_p = *top_p;
    if (temperature) c.sampling.temperature = *temperature;
    if (max_tokens) c.max_tokens = *max_tokens;
    if (method) c.method = gkp::aggregation_method_from_string(*method);
    if (mode) c.mode = gkp::scoring_mode_from_string(*mode);
    if (knowledge_source) c.knowledge_source = *knowledge_source;
    if (parallelism) c.parallelism = *parallelism;
    if (seed) c.seed = *seed;
    if (output_dir) c.output_dir = *output_dir;
    if (cache_dir) c.cache_dir = *cache_dir;
    if (annotation_cap) c.annotation_cap = *annotation_cap;
    generator.apply(c.generator);
    inference.apply(c.inference);
    return c;
  }
};

std::shared_ptr<gkp::Backend> open_backend(const gkp::BackendConfig &b, const gkp::RunConfig &config) {
  auto backend = gkp::make_backend(b);
  if (auto cache = gkp::open_cache(config)) return std::make_shared<gkp::CachingBackend>(backend, cache);
  return backend;
}

std::vector<std::size_t> parse_m_list(const std::string &text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception &) {
      throw gkp::Error(gkp::ErrorCode::config, "bad M value '" + item + "'");
    }
  }
  return out;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"gkp: generated knowledge prompting for multiple-choice commonsense QA"};
  app.require_subcommand(1);

  RunFlags knowledge_flags, infer_flags, evaluate_flags, sweep_flags;

  auto *knowledge = app.add_subcommand("knowledge", "sample knowledge statements for every question");
  knowledge_flags.add(*knowledge);

  auto *infer = app.add_subcommand("infer", "score every choice with and without knowledge");
  infer_flags.add(*infer);
  std::optional<std::string> infer_knowledge;
  infer->add_option("--knowledge", infer_knowledge, "knowledge.jsonl (omit for vanilla only)");

  auto *evaluate = app.add_subcommand("evaluate", "accuracy, flips, induced metrics and worklists");
  evaluate_flags.add(*evaluate);
  std::string predictions;
  evaluate->add_option("--predictions", predictions)->required();

  auto *sweep = app.add_subcommand("sweep", "accuracy as a function of M");
  sweep_flags.add(*sweep);
  std::string sweep_knowledge, sweep_values;
  sweep->add_option("--knowledge", sweep_knowledge)->required();
  sweep->add_option("--values", sweep_values, "strictly increasing, comma separated, e.g. 0,1,2,5")->required();

  auto *annotate = app.add_subcommand("annotate", "label a blinded worklist interactively");
  std::string worklist, annotator, annotations_out;
  annotate->add_option("--worklist", worklist)->required();
  annotate->add_option("--annotator", annotator)->required();
  annotate->add_option("--output", annotations_out, "annotation file (appended, resumable)")->required();

  auto *theory = app.add_subcommand("theory-check", "expectation and entropy checks on toy LMs");
  std::string theory_spec, theory_out = "out";
  theory->add_option("--spec", theory_spec)->required();
  theory->add_option("-o,--output-dir", theory_out);

  auto *report = app.add_subcommand("report", "agreement and label rates from annotation files");
  std::vector<std::string> annotation_files;
  std::optional<std::string> key_file;
  std::string report_out = "out";
  report->add_option("--annotations", annotation_files, "one file per annotator")->required();
  report->add_option("--key", key_file, "worklist key, to split rates by flip direction");
  report->add_option("-o,--output-dir", report_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gkp::exit_code_of(gkp::ErrorFamily::config);
  }

  try {
    if (knowledge->parsed()) {
      const auto config = knowledge_flags.resolve();
      config.validate(true);
      const auto backend = open_backend(config.generator, config);
      std::cout << gkp::cmd_knowledge(config, *backend).string() << "\n";
    } else if (infer->parsed()) {
      const auto config = infer_flags.resolve();
      config.validate();
      const auto backend = open_backend(config.inference, config);
      std::optional<std::filesystem::path> k;
      if (infer_knowledge) k = *infer_knowledge;
      std::cout << gkp::cmd_infer(config, *backend, k).string() << "\n";
    } else if (evaluate->parsed()) {
      const auto config = evaluate_flags.resolve();
      const auto r = gkp::cmd_evaluate(config, predictions);
      std::cout << r.summary_csv();
    } else if (sweep->parsed()) {
      const auto config = sweep_flags.resolve();
      config.validate();
      const auto backend = open_backend(config.inference, config);
      std::cout << gkp::sweep_csv(gkp::cmd_sweep(config, *backend, sweep_knowledge, parse_m_list(sweep_values)));
    } else if (annotate->parsed()) {
      const auto s = gkp::annotate(gkp::read_worklist(worklist), annotator, annotations_out, std::cin, std::cout);
      std::cout << "\n" << (s.already_done + s.recorded) << "/" << s.total << " labelled"
                << (s.finished ? "" : " (stopped early; run again to resume)") << "\n";
    } else if (theory->parsed()) {
      std::cout << gkp::cmd_theory_check(theory_spec, theory_out).dump(2) << "\n";
    } else if (report->parsed()) {
      std::vector<std::vector<gkp::AnnotationRecord>> by_annotator;
      for (const auto &f : annotation_files) by_annotator.push_back(gkp::read_annotations(f));
      const auto key = key_file ? gkp::read_annotation_key(*key_file) : std::map<std::string, gkp::FlipLabel>{};
      const auto out = gkp::annotation_report(by_annotator, key);
      gkp::write_file(std::filesystem::path(report_out) / "annotation_report.json", out.dump(2) + "\n");
      std::cout << out.dump(2) << "\n";
    }
  } catch (const gkp::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return gkp::exit_code_of(e.family());
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
