#include "mia/targets.hpp"

#include <array>

#include "mia/errors.hpp"

namespace mia {

const char* to_string(CapabilityTier tier) {
  switch (tier) {
    case CapabilityTier::text_only:
      return "TEXT_ONLY";
    case CapabilityTier::tokens_visible:
      return "TOKENS_VISIBLE";
    case CapabilityTier::logprobs_visible:
      break;
  }
  return "LOGPROBS_VISIBLE";
}

CapabilityTier tier_from_string(std::string_view name) {
  if (name == "TEXT_ONLY") return CapabilityTier::text_only;
  if (name == "TOKENS_VISIBLE") return CapabilityTier::tokens_visible;
  if (name == "LOGPROBS_VISIBLE") return CapabilityTier::logprobs_visible;
  throw ConfigError("unknown capability tier '" + std::string(name) + "'");
}

void Backend::require(CapabilityTier needed, std::string_view operation) const {
  if (tier() < needed) {
    throw UnsupportedCapability(std::string(operation) + " needs " + to_string(needed) +
                                " but backend '" + id() + "' is " + to_string(tier()));
  }
}

SampleBatch Backend::sample_next_words(std::string_view context, std::uint32_t n,
                                       std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample size must be at least 1");
  return do_sample_next_words(context, n, seed);
}

Continuations Backend::generate_continuation(std::string_view context, std::uint32_t max_words,
                                             std::uint32_t n, std::uint64_t seed) {
  if (max_words < 1) throw ConfigError("continuation length must be at least 1");
  return do_generate_continuation(context, max_words, n, seed);
}

SampleBatch Backend::sample_next_tokens(std::string_view context, std::uint32_t n,
                                        std::uint64_t seed) {
  require(CapabilityTier::tokens_visible, "sample_next_tokens");
  if (n < 1) throw ConfigError("sample size must be at least 1");
  return do_sample_next_tokens(context, n, seed);
}

std::vector<Word> Backend::tokenize_units(std::string_view text) {
  require(CapabilityTier::tokens_visible, "tokenize_units");
  return do_tokenize_units(text);
}

CandidateList Backend::top_candidates_with_logprobs(std::string_view context,
                                                    std::uint32_t top_k) {
  require(CapabilityTier::logprobs_visible, "top_candidates_with_logprobs");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  return do_top_candidates(context, top_k);
}

double Backend::unit_logprob(std::string_view context, std::string_view unit) {
  require(CapabilityTier::logprobs_visible, "unit_logprob");
  return do_unit_logprob(context, unit);
}

Distribution Backend::next_word_distribution(std::string_view) {
  throw UnsupportedCapability("next_word_distribution is only available on exact oracles");
}

SampleBatch Backend::do_sample_next_tokens(std::string_view, std::uint32_t, std::uint64_t) {
  throw UnsupportedCapability("backend '" + id() + "' does not implement token sampling");
}

std::vector<Word> Backend::do_tokenize_units(std::string_view) {
  throw UnsupportedCapability("backend '" + id() + "' does not expose tokenization");
}

CandidateList Backend::do_top_candidates(std::string_view, std::uint32_t) {
  throw UnsupportedCapability("backend '" + id() + "' does not expose log probabilities");
}

double Backend::do_unit_logprob(std::string_view, std::string_view) {
  throw UnsupportedCapability("backend '" + id() + "' does not expose log probabilities");
}

namespace {

// Quote characters stripped from both ends of a reply token.
constexpr std::array<std::string_view, 9> kQuotes = {"\"", "'", "`", "“", "”", "‘", "’", "«", "»"};

bool strip_quote_prefix(std::string_view& s) {
  for (auto q : kQuotes) {
    if (s.starts_with(q)) {
      s.remove_prefix(q.size());
      return true;
    }
  }
  return false;
}

bool strip_quote_suffix(std::string_view& s) {
  for (auto q : kQuotes) {
    if (s.ends_with(q)) {
      s.remove_suffix(q.size());
      return true;
    }
  }
  return false;
}

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string parse_next_word_reply(std::string_view reply) {
  std::size_t begin = 0;
  while (begin < reply.size() && is_ascii_space(reply[begin])) ++begin;
  std::size_t end = begin;
  while (end < reply.size() && !is_ascii_space(reply[end])) ++end;
  std::string_view token = reply.substr(begin, end - begin);
  while (strip_quote_prefix(token)) {
  }
  while (strip_quote_suffix(token)) {
  }
  if (token.empty()) return std::string(kEmptySentinel);
  return fold(token);
}

}  // namespace mia
