#include "mia/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mia/errors.hpp"

namespace mia {

const char* to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::empirical:
      return "empirical";
    case ScoreKind::semantic:
      return "semantic";
    case ScoreKind::weighted:
      break;
  }
  return "weighted";
}

void SmoothingConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("smoothing alpha must be a positive finite number");
  }
}

double smoothed_match_rate(std::uint32_t matches, std::uint32_t n, double alpha) {
  return (static_cast<double>(matches) + alpha) / (static_cast<double>(n) + 2.0 * alpha);
}

double word_similarity(const Word& target, std::string_view sample, const EmbeddingTable& table,
                       bool numeric_exact) {
  if (sample == kEmptySentinel) return 0.0;
  if (numeric_exact && target.is_numeric) return fold(sample) == target.folded ? 1.0 : 0.0;
  return table.similarity(target.folded, sample);
}

WordScore empirical_score(const Word& target, const SampleBatch& batch,
                          const SmoothingConfig& smoothing) {
  smoothing.validate();
  if (batch.n_obtained == 0) throw DataError("empirical score needs at least one sample");
  WordScore score;
  score.condition = batch.condition;
  score.kind = ScoreKind::empirical;
  score.n_effective = batch.n_obtained;
  score.value = smoothed_match_rate(batch.count_of(target.folded), batch.n_obtained,
                                    smoothing.alpha);
  return score;
}

WordScore semantic_score(const Word& target, const SampleBatch& batch,
                         const EmbeddingTable& table, bool numeric_exact) {
  if (batch.n_obtained == 0) throw DataError("semantic score needs at least one sample");
  double total = 0.0;
  for (const auto& [word, count] : batch.samples) {
    total += count * word_similarity(target, word, table, numeric_exact);
  }
  WordScore score;
  score.condition = batch.condition;
  score.kind = ScoreKind::semantic;
  score.n_effective = batch.n_obtained;
  score.value = std::clamp(total / batch.n_obtained, 0.0, 1.0);
  return score;
}

WordScore weighted_semantic_score(const Word& target, std::span<const Candidate> candidates,
                                  const EmbeddingTable& table, bool numeric_exact) {
  if (candidates.empty()) throw DataError("weighted score needs at least one candidate");
  double max_lp = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (std::isnan(c.logprob)) throw DataError("candidate log probability is NaN");
    max_lp = std::max(max_lp, c.logprob);
  }
  if (!std::isfinite(max_lp)) throw DataError("all candidate log probabilities are -inf");

  std::map<std::string, double> mass;
  double total = 0.0;
  for (const auto& c : candidates) {
    const double w = std::exp(c.logprob - max_lp);
    const std::string key = c.token == kEmptySentinel ? c.token : fold(c.token);
    auto [it, inserted] = mass.emplace(key, w);
    if (!inserted) it->second = std::max(it->second, w);
  }
  for (const auto& [token, w] : mass) total += w;
  double value = 0.0;
  for (const auto& [token, w] : mass) {
    value += (w / total) * word_similarity(target, token, table, numeric_exact);
  }
  WordScore score;
  score.kind = ScoreKind::weighted;
  score.n_effective = static_cast<std::uint32_t>(mass.size());
  score.value = std::clamp(value, 0.0, 1.0);
  return score;
}

void check_distribution(const Distribution& dist) {
  if (dist.empty()) throw DataError("empty next-word distribution");
  double total = 0.0;
  for (const auto& [word, p] : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DataError("invalid probability for '" + word + "'");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DataError("next-word distribution sums to " + std::to_string(total));
  }
}

double exact_expected_semantic(const Word& target, const Distribution& dist,
                               const EmbeddingTable& table, bool numeric_exact) {
  check_distribution(dist);
  double value = 0.0;
  for (const auto& [word, p] : dist) {
    if (p > 0.0) value += p * word_similarity(target, word, table, numeric_exact);
  }
  return std::clamp(value, 0.0, 1.0);
}

double exact_expected_empirical(const Word& target, const Distribution& dist, std::uint32_t n,
                                const SmoothingConfig& smoothing) {
  check_distribution(dist);
  smoothing.validate();
  double p = 0.0;
  for (const auto& [word, q] : dist) {
    if (word == target.folded) p += q;
  }
  return (n * p + smoothing.alpha) / (n + 2.0 * smoothing.alpha);
}

}  // namespace mia
