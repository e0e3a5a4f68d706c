#pragma once

#include <cstdint>
#include <span>

#include "mia/embeddings.hpp"
#include "mia/sample_batch.hpp"
#include "mia/textseg.hpp"

namespace mia {

enum class ScoreKind { empirical, semantic, weighted };

const char* to_string(ScoreKind kind);

struct WordScore {
  std::size_t position = 0;  // 1-based word index
  Condition condition = Condition::plain;
  double value = 0.0;
  ScoreKind kind = ScoreKind::empirical;
  std::uint32_t n_effective = 0;
};

struct SmoothingConfig {
  double alpha = 1.0;

  void validate() const;
};

/// (c + alpha) / (n + 2 alpha)
double smoothed_match_rate(std::uint32_t matches, std::uint32_t n, double alpha);

/// Similarity of one sampled word to the target; the exact-match indicator
/// replaces embeddings for numeric targets when `numeric_exact` is set.
double word_similarity(const Word& target, std::string_view sample, const EmbeddingTable& table,
                       bool numeric_exact);

/// Smoothed fraction of samples equal to the target's folded form.
WordScore empirical_score(const Word& target, const SampleBatch& batch,
                          const SmoothingConfig& smoothing);

/// Mean similarity between the target and each sample; sentinels add zero.
WordScore semantic_score(const Word& target, const SampleBatch& batch,
                         const EmbeddingTable& table, bool numeric_exact);

/// Similarity weighted by the candidates' renormalized probabilities. Tokens
/// folding to the same word are merged, keeping the larger probability.
WordScore weighted_semantic_score(const Word& target, std::span<const Candidate> candidates,
                                  const EmbeddingTable& table, bool numeric_exact = false);

/// Expected similarity under an explicit next-word distribution.
double exact_expected_semantic(const Word& target, const Distribution& dist,
                               const EmbeddingTable& table, bool numeric_exact = false);

/// Probability that a draw from `dist` equals the target, smoothed as if it
/// were the match rate of `n` samples: (n p + alpha) / (n + 2 alpha).
double exact_expected_empirical(const Word& target, const Distribution& dist, std::uint32_t n,
                                const SmoothingConfig& smoothing);

/// Validates that `dist` is a probability distribution (sum 1 within 1e-9).
void check_distribution(const Distribution& dist);

}  // namespace mia
