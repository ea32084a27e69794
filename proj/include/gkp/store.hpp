#pragma once

#include <array>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <fcntl.h>
#include <unistd.h>

#include "gkp/backends/backend.hpp"
#include "gkp/digest.hpp"
#include "gkp/jsonl.hpp"

namespace gkp {

inline constexpr std::string_view kArtifactVersion = "gkp 1.0.0";

/// Digest of (backend id, operation kind, request payload, per-request seed).
struct CacheKey {
  std::string digest;

  static CacheKey make(std::string_view backend_id, std::string_view op, const Json &payload,
                       std::uint64_t seed) {
    const Json parts{{"backend", backend_id}, {"op", op}, {"payload", payload}, {"seed", seed}};
    return {sha256_hex(parts.dump())};
  }

  std::string shard() const { return digest.substr(0, 2); }
  bool operator==(const CacheKey &) const = default;
};

struct CacheEntry {
  CacheKey key;
  std::string payload;
  std::string created_at;
  Json backend;
};

/// Directory of append-only shard files `<root>/<first two digest chars>.jsonl`,
/// one record per line:
///   {"key", "payload", "payload_sha256", "created_at", "backend"}
class Cache {
public:
  explicit Cache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  /// GKP_CACHE_DIR, else `fallback`.
  static std::filesystem::path default_root(const std::filesystem::path &fallback = ".gkp-cache") {
    if (const char *v = std::getenv("GKP_CACHE_DIR"); v && *v) return v;
    return fallback;
  }

  const std::filesystem::path &root() const { return root_; }

  std::optional<CacheEntry> get(const CacheKey &key) {
    auto &shard = shard_for(key);
    std::lock_guard lock(shard.mutex);
    load(shard, key.shard());
    const auto it = shard.entries.find(key.digest);
    if (it == shard.entries.end()) {
      if (shard.unreadable) throw Error(ErrorCode::corrupt_entry, "shard " + key.shard() + " has unreadable lines");
      return std::nullopt;
    }
    if (!it->second) throw Error(ErrorCode::corrupt_entry, key.digest);
    return it->second;
  }

  /// Idempotent for identical payloads; a different payload under an
  /// existing key is a conflict.
  void put(const CacheKey &key, const std::string &payload, const BackendDescriptor &backend) {
    auto &shard = shard_for(key);
    std::lock_guard lock(shard.mutex);
    load(shard, key.shard());
    if (const auto it = shard.entries.find(key.digest); it != shard.entries.end()) {
      if (!it->second) throw Error(ErrorCode::corrupt_entry, key.digest);
      if (it->second->payload != payload) throw Error(ErrorCode::conflicting_payload, key.digest);
      return;
    }
    CacheEntry entry{key, payload, timestamp(), backend.to_json()};
    const Json line{{"key", key.digest},
                    {"payload", payload},
                    {"payload_sha256", sha256_hex(payload)},
                    {"created_at", entry.created_at},
                    {"backend", entry.backend}};
    append_durably(root_ / (key.shard() + ".jsonl"), line.dump() + "\n");
    shard.entries.emplace(key.digest, std::move(entry));
  }

  /// Number of entries on disk.
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto &f : std::filesystem::directory_iterator(root_)) {
      if (f.path().extension() != ".jsonl") continue;
      std::ifstream in(f.path());
      std::string line;
      while (std::getline(in, line))
        if (!line.empty()) ++n;
    }
    return n;
  }

private:
  struct Shard {
    std::mutex mutex;
    bool loaded = false;
    bool unreadable = false;
    std::map<std::string, std::optional<CacheEntry>> entries; // nullopt = failed integrity check
  };

  Shard &shard_for(const CacheKey &key) {
    if (key.digest.size() < 2) throw Error(ErrorCode::invalid_argument, "malformed cache key");
    return shards_[static_cast<std::size_t>(std::stoul(key.shard(), nullptr, 16))];
  }

  void load(Shard &shard, const std::string &name) {
    if (shard.loaded) return;
    shard.loaded = true;
    std::ifstream in(root_ / (name + ".jsonl"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::parse_error &) {
        shard.unreadable = true;
        continue;
      }
      if (!j.is_object() || !j.contains("key") || !j["key"].is_string()) {
        shard.unreadable = true;
        continue;
      }
      const auto key = j["key"].get<std::string>();
      if (shard.entries.contains(key)) continue; // first write wins
      const bool intact = j.contains("payload") && j["payload"].is_string() &&
                          j.contains("payload_sha256") &&
                          sha256_hex(j["payload"].get<std::string>()) == j["payload_sha256"];
      if (!intact) {
        shard.entries.emplace(key, std::nullopt);
        continue;
      }
      shard.entries.emplace(key, CacheEntry{{key}, j["payload"].get<std::string>(),
                                            j.value("created_at", std::string{}),
                                            j.value("backend", Json::object())});
    }
  }

  static std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  static void append_durably(const std::filesystem::path &path, const std::string &line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorCode::io_error, "cannot open " + path.string());
    std::size_t written = 0;
    while (written < line.size()) {
      const auto n = ::write(fd, line.data() + written, line.size() - written);
      if (n < 0) {
        ::close(fd);
        throw Error(ErrorCode::io_error, "write failed on " + path.string());
      }
      written += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) throw Error(ErrorCode::io_error, "fsync failed on " + path.string());
  }

  std::filesystem::path root_;
  std::array<Shard, 256> shards_;
};

/// Serves repeated requests from a Cache; misses go to the inner backend and
/// are recorded.
class CachingBackend final : public Backend {
public:
  CachingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<Cache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  const BackendDescriptor &descriptor() const override { return inner_->descriptor(); }

  Completion generate(const GenerateRequest &request) override {
    const auto key = CacheKey::make(descriptor().id, "generate", request.payload(), request.request_seed());
    if (auto hit = cache_->get(key)) return Completion::from_json(Json::parse(hit->payload));
    auto result = inner_->generate(request);
    cache_->put(key, result.to_json().dump(), descriptor());
    return result;
  }

  std::vector<TokenScore> score_continuation(const ScoreRequest &request) override {
    const auto key = CacheKey::make(descriptor().id, "score", request.payload(), 0);
    if (auto hit = cache_->get(key)) return token_scores_from_json(Json::parse(hit->payload));
    auto result = inner_->score_continuation(request);
    cache_->put(key, to_json(result).dump(), descriptor());
    return result;
  }

private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<Cache> cache_;
};

/// Everything needed to re-derive a run's cache keys.
struct RunManifest {
  std::string run_id;
  Json config;
  Json datasets = Json::array();
  Json templates = Json::object();
  std::uint64_t seed = 0;

  Json to_json() const {
    return {{"run_id", run_id},
            {"config", config},
            {"datasets", datasets},
            {"templates", templates},
            {"seed", seed},
            {"digest_algorithm", kDigestAlgorithm},
            {"versions", {{"artifact", kArtifactVersion}}}};
  }

  std::string digest() const { return sha256_hex(to_json().dump()); }
};

inline std::filesystem::path write_manifest(const std::filesystem::path &dir, const RunManifest &m) {
  const auto path = dir / "manifest.json";
  try {
    write_file(path, m.to_json().dump(2) + "\n");
  } catch (const std::filesystem::filesystem_error &e) {
    throw Error(ErrorCode::io_error, e.what());
  }
  return path;
}

} // namespace gkp
