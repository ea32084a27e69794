#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"

using namespace gkp;
using gkp::test::TempDir;

namespace {

const BackendDescriptor kDescriptor{"fixture", BackendKind::fixture, "scripted"};

CacheKey key(const std::string &prompt, std::uint64_t seed = 0) {
  return CacheKey::make("fixture", "generate", Json{{"prompt", prompt}}, seed);
}

} // namespace

TEST(Cache, RoundTripAndMiss) {
  TempDir dir;
  Cache cache(dir.path());
  cache.put(key("P"), "payload-1", kDescriptor);
  const auto hit = cache.get(key("P"));
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->payload, "payload-1");
  EXPECT_FALSE(cache.get(key("unknown")));
  Cache reopened(dir.path());
  EXPECT_EQ(reopened.get(key("P"))->payload, "payload-1");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / (key("P").shard() + ".jsonl")));
}

TEST(Cache, IdempotentAndConflicting) {
  TempDir dir;
  Cache cache(dir.path());
  cache.put(key("P"), "same", kDescriptor);
  cache.put(key("P"), "same", kDescriptor);
  EXPECT_EQ(cache.size(), 1u);
  try {
    cache.put(key("P"), "different", kDescriptor);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::conflicting_payload);
  }
  Cache reopened(dir.path());
  EXPECT_THROW(reopened.put(key("P"), "different", kDescriptor), Error);
}

TEST(Cache, TamperedFileIsCorrupt) {
  TempDir dir;
  {
    Cache cache(dir.path());
    cache.put(key("P"), "original", kDescriptor);
  }
  const auto shard = dir.path() / (key("P").shard() + ".jsonl");
  auto text = read_file(shard);
  text.replace(text.find("original"), 8, "tampered");
  write_file(shard, text);
  Cache cache(dir.path());
  try {
    cache.get(key("P"));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::corrupt_entry);
  }
}

TEST(Cache, UnreadableLineIsCorrupt) {
  TempDir dir;
  const auto k = key("P");
  write_file(dir.path() / (k.shard() + ".jsonl"), "{not json\n");
  Cache cache(dir.path());
  EXPECT_THROW(cache.get(k), Error);
}

TEST(Cache, ConcurrentPutsLoseNothing) {
  TempDir dir;
  Cache cache(dir.path());
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = t; i < 1000; i += 8) cache.put(key("P" + std::to_string(i)), "v" + std::to_string(i), kDescriptor);
    });
  threads.clear();
  EXPECT_EQ(cache.size(), 1000u);
  Cache reopened(dir.path());
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(reopened.get(key("P" + std::to_string(i)))->payload, "v" + std::to_string(i));
}

TEST(Cache, ConcurrentDuplicatePutsAreIdempotent) {
  TempDir dir;
  Cache cache(dir.path());
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) cache.put(key("P" + std::to_string(i)), "v" + std::to_string(i), kDescriptor);
    });
  threads.clear();
  EXPECT_EQ(cache.size(), 50u);
}

TEST(CacheKey, Sensitivity) {
  const auto base = CacheKey::make("b", "generate", Json{{"prompt", "P"}, {"top_p", 0.5}}, 1);
  EXPECT_EQ(base, CacheKey::make("b", "generate", Json{{"prompt", "P"}, {"top_p", 0.5}}, 1));
  EXPECT_NE(base, CacheKey::make("c", "generate", Json{{"prompt", "P"}, {"top_p", 0.5}}, 1));
  EXPECT_NE(base, CacheKey::make("b", "score", Json{{"prompt", "P"}, {"top_p", 0.5}}, 1));
  EXPECT_NE(base, CacheKey::make("b", "generate", Json{{"prompt", "P"}, {"top_p", 0.6}}, 1));
  EXPECT_NE(base, CacheKey::make("b", "generate", Json{{"prompt", "P"}, {"top_p", 0.5}}, 2));
}

TEST(CachingBackend, TransparentAndWarm) {
  TempDir dir;
  auto fixture = test::fixture_backend();
  register_fixture(*fixture, {{generation_digest("P"), std::vector<std::string>{"k0", "k1"}},
                              {scoring_digest("Q", "a"), scripted_scores("a", {-0.7})}});
  auto counting = std::make_shared<CountingBackend>(fixture);
  auto cache = std::make_shared<Cache>(dir.path());
  CachingBackend cached(counting, cache);
  const SamplingParams p{64, 0.5, 1.0, {"\n"}, 3};
  EXPECT_EQ(generate(cached, "P", p, 1).text, generate(*fixture, "P", p, 1).text);
  EXPECT_EQ(sum_logprobs(score_continuation(cached, "Q", "a")), -0.7);
  const auto calls = counting->calls();
  EXPECT_EQ(generate(cached, "P", p, 1).text, "k1");
  score_continuation(cached, "Q", "a");
  EXPECT_EQ(counting->calls(), calls);

  // Different top_p is a different request.
  auto q = p;
  q.top_p = 0.9;
  generate(cached, "P", q, 1);
  EXPECT_EQ(counting->calls(), calls + 1);
}

TEST(Manifest, DigestTracksConfigAndDataset) {
  TempDir dir;
  const auto s = test::write_flip_scenario(dir.path());
  const auto ds = load_dataset(s.config.dataset, s.config.task);
  const auto m1 = make_manifest(s.config, ds);
  EXPECT_EQ(m1.digest(), make_manifest(s.config, ds).digest());
  auto changed = s.config;
  changed.sampling.top_p = 0.9;
  EXPECT_NE(make_manifest(changed, ds).digest(), m1.digest());
  changed = s.config;
  changed.M = 3;
  EXPECT_NE(make_manifest(changed, ds).digest(), m1.digest());
  EXPECT_EQ(m1.to_json()["datasets"][0]["digest"], ds.manifest.digest);
  EXPECT_EQ(m1.to_json()["digest_algorithm"], "sha256");
  const auto path = write_manifest(dir.path() / "out", m1);
  EXPECT_EQ(read_json_file(path), m1.to_json());
  EXPECT_EQ(RunConfig::from_json(read_json_file(path)).to_json(), s.config.to_json());
}

TEST(Cache, EnvironmentOverridesRoot) {
  ::setenv("GKP_CACHE_DIR", "/tmp/somewhere", 1);
  EXPECT_EQ(Cache::default_root(), "/tmp/somewhere");
  ::unsetenv("GKP_CACHE_DIR");
  EXPECT_EQ(Cache::default_root(), ".gkp-cache");
}
