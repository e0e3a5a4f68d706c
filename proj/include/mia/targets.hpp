#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mia/sample_batch.hpp"
#include "mia/textseg.hpp"

namespace mia {

/// How much a target model discloses beyond generated text.
enum class CapabilityTier { text_only = 0, tokens_visible = 1, logprobs_visible = 2 };

const char* to_string(CapabilityTier tier);
CapabilityTier tier_from_string(std::string_view name);

/// Uniform view of a target model.
///
/// Public entry points check the capability tier and then dispatch to the
/// protected hooks, so a lower-tier backend always reports
/// UnsupportedCapability instead of silently falling back. Implementations
/// must be safe for concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string id() const = 0;
  virtual CapabilityTier tier() const = 0;
  /// Upper bound on concurrent requests the backend accepts.
  virtual std::size_t max_inflight() const { return 8; }

  SampleBatch sample_next_words(std::string_view context, std::uint32_t n, std::uint64_t seed);
  Continuations generate_continuation(std::string_view context, std::uint32_t max_words,
                                      std::uint32_t n, std::uint64_t seed);

  // TOKENS_VISIBLE
  SampleBatch sample_next_tokens(std::string_view context, std::uint32_t n, std::uint64_t seed);
  std::vector<Word> tokenize_units(std::string_view text);

  // LOGPROBS_VISIBLE
  CandidateList top_candidates_with_logprobs(std::string_view context, std::uint32_t top_k);
  /// Log probability the model assigns to `unit` as the next unit of `context`.
  double unit_logprob(std::string_view context, std::string_view unit);

  /// Exact next-word distribution sorted by word. Only exact oracles support it.
  virtual Distribution next_word_distribution(std::string_view context);

 protected:
  virtual SampleBatch do_sample_next_words(std::string_view context, std::uint32_t n,
                                           std::uint64_t seed) = 0;
  virtual Continuations do_generate_continuation(std::string_view context,
                                                 std::uint32_t max_words, std::uint32_t n,
                                                 std::uint64_t seed) = 0;
  virtual SampleBatch do_sample_next_tokens(std::string_view context, std::uint32_t n,
                                            std::uint64_t seed);
  virtual std::vector<Word> do_tokenize_units(std::string_view text);
  virtual CandidateList do_top_candidates(std::string_view context, std::uint32_t top_k);
  virtual double do_unit_logprob(std::string_view context, std::string_view unit);

 private:
  void require(CapabilityTier needed, std::string_view operation) const;
};

using BackendPtr = std::shared_ptr<Backend>;

/// Reply normalization for text-only APIs: first whitespace-delimited token,
/// surrounding ASCII and typographic quotes stripped, folded. Empty results
/// become kEmptySentinel.
std::string parse_next_word_reply(std::string_view reply);

}  // namespace mia
