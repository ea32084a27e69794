#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gkp/error.hpp"

namespace gkp {

using Json = nlohmann::json;

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::file_not_found, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path &path, const std::string &content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << content;
  if (!out.flush()) throw Error(ErrorCode::io_error, "short write " + path.string());
}

inline Json read_json_file(const std::filesystem::path &path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error &e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
}

struct JsonLine {
  std::size_t line_number; // 1-based
  Json value;
};

/// Parses one JSON value per nonblank line.
inline std::vector<JsonLine> read_jsonl(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::file_not_found, path.string());
  std::vector<JsonLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back({n, Json::parse(line)});
    } catch (const Json::parse_error &e) {
      throw Error(ErrorCode::parse_error,
                  path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::string to_jsonl(const std::vector<Json> &records) {
  std::string out;
  for (const auto &r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path &path, const std::vector<Json> &records) {
  write_file(path, to_jsonl(records));
}

} // namespace gkp
