#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mia/targets.hpp"
#include "mia/textseg.hpp"

namespace mia {

/// Order-k word model with add-one smoothing and an optional unigram cache
/// blended in from the conditioning context:
///
///   P(w | h)      = (c(h, w) + 1) / (c(h) + |V|)
///   P'(w | ctx)   = (1 - lambda) P(w | last k-1 words)
///                 + lambda (count(w in ctx) + beta) / (len(ctx) + beta |V|)
///
/// The vocabulary is sorted bytewise and always contains kUnknownWord, to
/// which unseen words are mapped. Immutable after training.
class NGramOracle {
 public:
  using WordId = std::uint32_t;
  /// History padding symbol; never part of the sampling support.
  static constexpr WordId kBoundary = UINT32_MAX;

  /// Incrementally extended conditioning context.
  class State {
   public:
    void push(WordId id);
    std::size_t length() const { return length_; }

   private:
    friend class NGramOracle;
    std::vector<WordId> history_;      // last order-1 ids, boundary padded
    std::vector<std::uint32_t> cache_;  // per-word counts, empty when lambda == 0
    std::size_t length_ = 0;
  };

  static NGramOracle train(std::span<const Document> corpus, int order, double cache_weight = 0.0,
                           double cache_pseudocount = 1.0);

  int order() const { return order_; }
  double cache_weight() const { return cache_weight_; }
  double cache_pseudocount() const { return cache_pseudocount_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  WordId id_of(std::string_view folded) const;
  WordId unknown_id() const { return unknown_id_; }

  /// Raw n-gram counts; `history` holds order-1 ids (kBoundary allowed).
  std::uint32_t count(std::span<const WordId> history, WordId word) const;
  std::uint32_t history_total(std::span<const WordId> history) const;

  State start_state() const;
  State encode(std::string_view context) const;
  State encode_words(std::span<const std::string> folded_words) const;

  /// Probabilities indexed by WordId; sums to one.
  std::vector<double> probabilities(const State& state) const;
  Distribution distribution(std::string_view context) const;

  /// SHA-256 over a canonical serialization of parameters and counts.
  std::string digest() const;

 private:
  struct HistoryCounts {
    std::uint32_t total = 0;
    std::vector<std::pair<WordId, std::uint32_t>> next;  // sorted by id
  };

  static std::string history_key(std::span<const WordId> history);
  const HistoryCounts* find(std::span<const WordId> history) const;

  int order_ = 1;
  double cache_weight_ = 0.0;
  double cache_pseudocount_ = 1.0;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, WordId> index_;
  WordId unknown_id_ = 0;
  std::unordered_map<std::string, HistoryCounts> counts_;
};

/// In-process target backed by an NGramOracle.
///
/// Sampling is inverse-CDF over the sorted vocabulary driven by a generator
/// seeded from the request seed, so identical (context, n, seed) triples give
/// identical batches. Tokens are words for this backend.
class OracleBackend : public Backend {
 public:
  struct Options {
    std::string id = "oracle";
    CapabilityTier tier = CapabilityTier::logprobs_visible;
    double temperature = 1.0;
    std::size_t max_inflight = 8;
  };

  OracleBackend(std::shared_ptr<const NGramOracle> oracle, Options options);
  explicit OracleBackend(std::shared_ptr<const NGramOracle> oracle)
      : OracleBackend(std::move(oracle), Options{}) {}

  std::string id() const override { return options_.id; }
  CapabilityTier tier() const override { return options_.tier; }
  std::size_t max_inflight() const override { return options_.max_inflight; }
  Distribution next_word_distribution(std::string_view context) override;

  const NGramOracle& oracle() const { return *oracle_; }

  /// Samples `n` words for an already encoded state; shared with the mock server.
  std::vector<std::string> sample_words(const NGramOracle::State& state, std::uint32_t n,
                                        std::uint64_t seed) const;
  /// Autoregressive continuation j of a batch; continuation seeds are derived
  /// per index so a longer request reproduces every shorter one as a prefix.
  std::vector<std::string> continuation(const NGramOracle::State& state, std::uint32_t max_words,
                                        std::uint64_t seed, std::uint32_t index) const;
  std::vector<Candidate> ranked_candidates(const NGramOracle::State& state,
                                           std::uint32_t top_k) const;

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
  std::vector<double> tempered(const NGramOracle::State& state) const;

  std::shared_ptr<const NGramOracle> oracle_;
  Options options_;
};

/// Seed of continuation `index` within a batch drawn with `seed`.
std::uint64_t continuation_seed(std::uint64_t seed, std::uint32_t index);

}  // namespace mia
