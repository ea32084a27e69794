#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gkp/analysis.hpp"
#include "gkp/jsonl.hpp"

namespace gkp {

inline std::vector<WorklistItem> read_worklist(const std::filesystem::path &path) {
  std::vector<WorklistItem> out;
  for (const auto &[line, value] : read_jsonl(path)) {
    try {
      out.push_back(WorklistItem::from_json(value));
    } catch (const Json::exception &e) {
      throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

struct AnnotationSession {
  std::size_t total = 0;
  std::size_t already_done = 0;
  std::size_t recorded = 0;
  bool finished = false;
};

namespace detail {

/// Asks until one of `accepted` is typed; nullopt on end of input.
inline std::optional<char> ask(std::istream &in, std::ostream &out, const std::string &question,
                               const std::string &accepted) {
  std::string line;
  while (true) {
    out << question << " [" << accepted << "]: " << std::flush;
    if (!std::getline(in, line)) return std::nullopt;
    const auto t = trim(line);
    if (t.size() == 1 && accepted.find(static_cast<char>(std::tolower(t[0]))) != std::string::npos)
      return static_cast<char>(std::tolower(t[0]));
    out << "please answer with one of: " << accepted << "\n";
  }
}

} // namespace detail

/// Walks the worklist, skipping items this annotator already labelled in
/// `output`, and appends each new label as soon as it is complete. Stops
/// cleanly at end of input; running again resumes.
inline AnnotationSession annotate(const std::vector<WorklistItem> &worklist, const std::string &annotator_id,
                                  const std::filesystem::path &output, std::istream &in, std::ostream &out) {
  if (annotator_id.empty()) throw Error(ErrorCode::invalid_argument, "annotator id is empty");
  AnnotationSession session;
  session.total = worklist.size();
  std::set<std::string> done;
  if (std::filesystem::exists(output))
    for (const auto &[line, value] : read_jsonl(output)) {
      const auto r = AnnotationRecord::from_json(value);
      if (r.annotator_id == annotator_id) done.insert(r.knowledge_id);
    }
  if (!output.parent_path().empty()) std::filesystem::create_directories(output.parent_path());
  std::ofstream file(output, std::ios::app);
  if (!file) throw Error(ErrorCode::io_error, "cannot open " + output.string());

  std::size_t position = 0;
  for (const auto &item : worklist) {
    ++position;
    if (done.contains(item.knowledge_id)) {
      ++session.already_done;
      continue;
    }
    out << "\n[" << position << "/" << worklist.size() << "] " << item.knowledge_id << "\n"
        << "Question: " << item.question << "\n"
        << "Choices: " << join(item.choices, ", ") << "\n"
        << "Knowledge: " << item.knowledge << "\n";
    const auto g = detail::ask(in, out, "grammatical?", "yn");
    if (!g) return session;
    const auto r = detail::ask(in, out, "relevant?", "yn");
    if (!r) return session;
    const auto f = detail::ask(in, out, "factual?", "yn");
    if (!f) return session;
    const auto h = detail::ask(in, out, "helpful (h), harmful (x) or neutral (n)?", "hxn");
    if (!h) return session;
    AnnotationRecord rec{item.knowledge_id, annotator_id, *g == 'y', *r == 'y', *f == 'y',
                         *h == 'h' ? Helpfulness::helpful : *h == 'x' ? Helpfulness::harmful : Helpfulness::neutral};
    file << rec.to_json().dump() << "\n" << std::flush;
    ++session.recorded;
  }
  session.finished = true;
  return session;
}

} // namespace gkp
