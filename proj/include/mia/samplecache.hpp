#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "mia/digest.hpp"
#include "mia/sample_batch.hpp"
#include "mia/targets.hpp"

namespace mia {

/// Identity of one backend request. The descriptor is
/// "backend_id|mode|<bytes>:context|n|seed|temperature"; the context is
/// length-prefixed so separators inside it cannot collide.
struct CacheKey {
  std::string backend_id;
  std::string descriptor;
  Sha256 digest{};
  Sha256 context_digest{};

  static CacheKey make(std::string_view backend_id, std::string_view mode,
                       std::string_view context, std::uint64_t n, std::uint64_t seed,
                       double temperature);
  std::string hex() const { return to_hex(digest); }
};

struct CostCounters {
  std::uint64_t requests = 0;
  std::uint64_t retries = 0;
  std::uint64_t sentinel_count = 0;
  std::uint64_t cached_hits = 0;

  CostCounters& operator+=(const CostCounters& other);
  bool operator==(const CostCounters&) const = default;
};

/// Per-backend query accounting.
struct CostLedger {
  std::map<std::string, CostCounters> backends;

  CostCounters total() const;
};

struct StoreStats {
  std::uint64_t entries = 0;
  std::uint64_t bytes = 0;
  std::uint64_t corrupt = 0;
};

/// On-disk record/replay store: one JSON file per request under
/// root/<2 hex>/<64 hex>.json, published by write-then-rename.
class SampleStore {
 public:
  explicit SampleStore(std::filesystem::path root, bool replay_only = false);

  const std::filesystem::path& root() const { return root_; }
  bool replay_only() const { return replay_only_; }

  SampleBatch get_or_sample(const CacheKey& key, const std::function<SampleBatch()>& thunk);
  Continuations get_or_generate(const CacheKey& key, const std::function<Continuations()>& thunk);
  CandidateList get_or_rank(const CacheKey& key, const std::function<CandidateList()>& thunk);
  double get_or_logprob(const CacheKey& key, const std::function<double()>& thunk);
  std::vector<Word> get_or_tokenize(const CacheKey& key,
                                    const std::function<std::vector<Word>()>& thunk);

  CostLedger ledger_snapshot() const;
  std::filesystem::path entry_path(const CacheKey& key) const;
  /// Walks the store on disk; corrupt files are counted, not removed.
  StoreStats scan() const;

 private:
  template <typename T, typename Encode, typename Decode>
  T get_or_compute(const CacheKey& key, const std::function<T()>& thunk, Encode encode,
                   Decode decode, std::function<CallCost(const T&)> cost_of);

  std::mutex& key_mutex(const CacheKey& key) { return key_mutexes_[key.digest[0]]; }
  void record(const std::string& backend_id, const CostCounters& delta);

  std::filesystem::path root_;
  bool replay_only_;
  std::array<std::mutex, 256> key_mutexes_;
  mutable std::mutex ledger_mutex_;
  CostLedger ledger_;
  std::atomic<std::uint64_t> tmp_counter_{0};
};

/// Backend decorator that answers from a SampleStore and forwards misses to
/// the wrapped backend. Without an inner backend every miss is a CacheMiss.
class CachedBackend : public Backend {
 public:
  struct Options {
    std::string backend_id;  // required when there is no inner backend
    CapabilityTier tier = CapabilityTier::logprobs_visible;
    double temperature = 1.0;
  };

  CachedBackend(BackendPtr inner, std::shared_ptr<SampleStore> store, Options options);

  std::string id() const override { return id_; }
  CapabilityTier tier() const override { return tier_; }
  std::size_t max_inflight() const override;
  Distribution next_word_distribution(std::string_view context) override;

  SampleStore& store() { return *store_; }

 protected:
  SampleBatch do_sample_next_words(std::string_view context, std::uint32_t n,
                                   std::uint64_t seed) override;
  Continuations do_generate_continuation(std::string_view context, std::uint32_t max_words,
                                         std::uint32_t n, std::uint64_t seed) override;
  SampleBatch do_sample_next_tokens(std::string_view context, std::uint32_t n,
                                    std::uint64_t seed) override;
  std::vector<Word> do_tokenize_units(std::string_view text) override;
  CandidateList do_top_candidates(std::string_view context, std::uint32_t top_k) override;
  double do_unit_logprob(std::string_view context, std::string_view unit) override;

 private:
  Backend& inner(const CacheKey& key);

  BackendPtr inner_;
  std::shared_ptr<SampleStore> store_;
  Options options_;
  std::string id_;
  CapabilityTier tier_;
};

}  // namespace mia
