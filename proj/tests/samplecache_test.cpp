#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mia/errors.hpp"
#include "mia/samplecache.hpp"

namespace mia {
namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Counts calls and returns deterministic batches derived from the seed.
class CountingBackend : public Backend {
 public:
  std::string id() const override { return "counting"; }
  CapabilityTier tier() const override { return CapabilityTier::logprobs_visible; }
  std::atomic<int> calls{0};

 protected:
  SampleBatch do_sample_next_words(std::string_view context, std::uint32_t n,
                                   std::uint64_t seed) override {
    ++calls;
    std::vector<std::string> words;
    for (std::uint32_t i = 0; i < n; ++i) words.push_back("w" + std::to_string((seed + i) % 3));
    auto b = make_batch(context, words, n, seed, id());
    b.cost.requests = 1;
    b.raw_replies = words;
    return b;
  }
  Continuations do_generate_continuation(std::string_view, std::uint32_t max_words,
                                         std::uint32_t n, std::uint64_t) override {
    ++calls;
    Continuations c;
    c.sequences.assign(n, std::vector<std::string>(max_words, "x"));
    c.cost.requests = 1;
    return c;
  }
  CandidateList do_top_candidates(std::string_view, std::uint32_t) override {
    ++calls;
    CandidateList l;
    l.candidates = {{"a", -0.5}, {"b", -1.5}};
    l.cost.requests = 1;
    return l;
  }
  double do_unit_logprob(std::string_view, std::string_view) override {
    ++calls;
    return -2.25;
  }
  std::vector<Word> do_tokenize_units(std::string_view text) override {
    ++calls;
    return tokenize_words(text);
  }
};

TEST(CacheKey, DistinguishesEveryField) {
  const auto base = CacheKey::make("b", "next_words", "ctx", 10, 1, 1.0);
  EXPECT_EQ(base.hex(), CacheKey::make("b", "next_words", "ctx", 10, 1, 1.0).hex());
  EXPECT_NE(base.hex(), CacheKey::make("c", "next_words", "ctx", 10, 1, 1.0).hex());
  EXPECT_NE(base.hex(), CacheKey::make("b", "next_tokens", "ctx", 10, 1, 1.0).hex());
  EXPECT_NE(base.hex(), CacheKey::make("b", "next_words", "ctx ", 10, 1, 1.0).hex());
  EXPECT_NE(base.hex(), CacheKey::make("b", "next_words", "ctx", 11, 1, 1.0).hex());
  EXPECT_NE(base.hex(), CacheKey::make("b", "next_words", "ctx", 10, 2, 1.0).hex());
  EXPECT_NE(base.hex(), CacheKey::make("b", "next_words", "ctx", 10, 1, 0.7).hex());
  // Separators inside the context cannot forge another key.
  EXPECT_NE(CacheKey::make("b", "m", "x|1", 2, 3, 1.0).hex(),
            CacheKey::make("b", "m", "x", 1, 2, 1.0).hex());
}

TEST(Store, MissThenHitIsIdentical) {
  TempDir dir("mia_cache_hit");
  auto inner = std::make_shared<CountingBackend>();
  auto store = std::make_shared<SampleStore>(dir.path());
  CachedBackend cached(inner, store, {});
  const auto a = cached.sample_next_words("the cat", 8, 42);
  const auto b = cached.sample_next_words("the cat", 8, 42);
  EXPECT_EQ(inner->calls.load(), 1);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.raw_replies, b.raw_replies);
  EXPECT_EQ(a.n_obtained, b.n_obtained);
  const auto ledger = store->ledger_snapshot().total();
  EXPECT_EQ(ledger.requests, 1u);
  EXPECT_EQ(ledger.cached_hits, 1u);
  cached.sample_next_words("the cat", 8, 43);
  EXPECT_EQ(inner->calls.load(), 2);
}

TEST(Store, AllEntryKinds) {
  TempDir dir("mia_cache_kinds");
  auto inner = std::make_shared<CountingBackend>();
  auto store = std::make_shared<SampleStore>(dir.path());
  CachedBackend cached(inner, store, {});
  for (int round = 0; round < 2; ++round) {
    const auto c = cached.generate_continuation("ctx", 3, 2, 5);
    EXPECT_EQ(c.sequences.size(), 2u);
    const auto r = cached.top_candidates_with_logprobs("ctx", 2);
    ASSERT_EQ(r.candidates.size(), 2u);
    EXPECT_EQ(r.candidates[1].logprob, -1.5);
    EXPECT_EQ(cached.unit_logprob("ctx", "a"), -2.25);
    const auto t = cached.tokenize_units("Hi, there");
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[1].span, (Span{2, 3}));
  }
  EXPECT_EQ(inner->calls.load(), 4);
  EXPECT_EQ(store->scan().entries, 4u);
}

TEST(Store, ReplayOnlyMissThrowsAndWarmHits) {
  TempDir dir("mia_cache_replay");
  {
    auto store = std::make_shared<SampleStore>(dir.path());
    CachedBackend cached(std::make_shared<CountingBackend>(), store, {});
    cached.sample_next_words("warm", 4, 1);
  }
  auto store = std::make_shared<SampleStore>(dir.path(), true);
  CachedBackend::Options o;
  o.backend_id = "counting";
  CachedBackend replay(nullptr, store, o);
  EXPECT_EQ(replay.sample_next_words("warm", 4, 1).n_obtained, 4u);
  EXPECT_THROW(replay.sample_next_words("cold", 4, 1), CacheMiss);
  EXPECT_THROW(replay.next_word_distribution("warm"), UnsupportedCapability);
  EXPECT_EQ(store->ledger_snapshot().total().requests, 0u);
}

TEST(Store, CorruptEntryIsAMiss) {
  TempDir dir("mia_cache_corrupt");
  auto inner = std::make_shared<CountingBackend>();
  auto store = std::make_shared<SampleStore>(dir.path());
  CachedBackend cached(inner, store, {});
  cached.sample_next_words("ctx", 4, 9);
  const auto key = CacheKey::make("counting", "next_words", "ctx", 4, 9, 1.0);
  ASSERT_TRUE(std::filesystem::exists(store->entry_path(key)));
  std::ofstream(store->entry_path(key)) << "{not json";
  EXPECT_EQ(store->scan().corrupt, 1u);
  cached.sample_next_words("ctx", 4, 9);
  EXPECT_EQ(inner->calls.load(), 2);
  EXPECT_EQ(store->scan().corrupt, 0u);
}

TEST(Store, ConcurrentSameKeyCallsInnerOnce) {
  TempDir dir("mia_cache_concurrent");
  auto inner = std::make_shared<CountingBackend>();
  auto store = std::make_shared<SampleStore>(dir.path());
  CachedBackend cached(inner, store, {});
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int k = 0; k < 20; ++k) cached.sample_next_words("ctx" + std::to_string(k), 4, 1);
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(inner->calls.load(), 20);
  const auto total = store->ledger_snapshot().total();
  EXPECT_EQ(total.requests, 20u);
  EXPECT_EQ(total.cached_hits, 140u);
}

}  // namespace
}  // namespace mia
