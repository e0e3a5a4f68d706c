#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mia/digest.hpp"

namespace mia {

/// Placeholder recorded when a backend produced no usable word.
inline constexpr std::string_view kEmptySentinel = "⟨empty⟩";
/// Out-of-vocabulary bucket of the n-gram oracle. A single symbol, so it
/// survives a round trip through generated text and re-tokenization.
inline constexpr std::string_view kUnknownWord = "∅";

enum class Condition { plain, shot_prefixed };

const char* to_string(Condition condition);

/// Query accounting attached to every backend result.
struct CallCost {
  std::uint64_t requests = 0;
  std::uint64_t retries = 0;
  std::uint64_t sentinels = 0;

  CallCost& operator+=(const CallCost& other) {
    requests += other.requests;
    retries += other.retries;
    sentinels += other.sentinels;
    return *this;
  }
};

/// Multiset of next-unit samples for one context.
struct SampleBatch {
  Sha256 context_digest{};
  Condition condition = Condition::plain;
  std::vector<std::pair<std::string, std::uint32_t>> samples;  // sorted by word, counts > 0
  std::uint32_t n_requested = 0;
  std::uint32_t n_obtained = 0;
  std::uint64_t seed = 0;
  std::string backend_id;

  // Not part of the batch identity; persisted beside it by the sample cache.
  std::vector<std::string> raw_replies;
  CallCost cost;

  std::uint32_t count_of(std::string_view word) const;
  std::uint32_t sentinel_count() const { return count_of(kEmptySentinel); }
};

/// Collapses individual samples into a sorted multiset.
SampleBatch make_batch(std::string_view context, std::span<const std::string> words,
                       std::uint32_t n_requested, std::uint64_t seed, std::string backend_id);

/// N full continuations, each a list of folded words.
struct Continuations {
  std::vector<std::vector<std::string>> sequences;
  std::vector<std::string> raw_replies;
  CallCost cost;
};

struct Candidate {
  std::string token;
  double logprob;
};

struct CandidateList {
  std::vector<Candidate> candidates;
  std::vector<std::string> raw_replies;
  CallCost cost;
};

using Distribution = std::vector<std::pair<std::string, double>>;

}  // namespace mia
