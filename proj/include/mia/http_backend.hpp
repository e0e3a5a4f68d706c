#pragma once

#include <chrono>
#include <map>
#include <string>

#include "mia/targets.hpp"

namespace mia {

/// Instruction asking a chat model for exactly one next word.
inline constexpr std::string_view kNextWordSystemPrompt =
    "Return ONLY the single next token from the text. It can be punctuation or one whole word. "
    "No spaces, no quotes, no extra text.";
inline constexpr std::string_view kContinuationSystemPrompt =
    "Continue the text. Output only the continuation.";
inline constexpr std::string_view kUserPromptMarker = "Text so far: ";

std::string next_word_user_prompt(std::string_view prefix);

/// Seed of chunk `index` when a batch is split across several requests.
std::uint64_t chunk_seed(std::uint64_t seed, std::uint32_t index);

/// Chat-completion client.
///
/// POST <base_url><chat_path> with {model, messages, temperature, max_tokens,
/// n, seed}. Rate limits (429), 5xx and transport failures are retried with
/// exponential backoff honouring Retry-After; other 4xx responses raise
/// ProviderError at once. A request that still fails contributes sentinel
/// samples, and a batch whose failed share exceeds `failure_budget` raises
/// BudgetError.
class HttpChatBackend : public Backend {
 public:
  struct Options {
    std::string id = "http";
    std::string base_url;
    std::string chat_path = "/v1/chat/completions";
    std::string tokenize_path = "/tokenize";
    std::string model;
    CapabilityTier tier = CapabilityTier::text_only;
    double temperature = 1.0;
    std::uint32_t max_n_per_request = 128;
    std::uint32_t max_attempts = 5;
    std::chrono::milliseconds backoff_initial{500};
    double backoff_factor = 2.0;
    std::chrono::milliseconds timeout{60000};
    std::string auth_header = "Authorization";
    std::string auth_prefix = "Bearer ";
    std::string api_key_env;  // empty: no credential sent
    double failure_budget = 0.2;
    std::size_t max_inflight = 8;
    std::uint32_t top_logprobs = 20;
    bool send_seed = true;
  };

  explicit HttpChatBackend(Options options);

  std::string id() const override { return options_.id; }
  CapabilityTier tier() const override { return options_.tier; }
  std::size_t max_inflight() const override { return options_.max_inflight; }
  const Options& options() const { return options_; }

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
  struct Reply {
    bool ok = false;
    std::string body;
  };

  /// Sends with retries; `ok` is false once attempts are exhausted.
  Reply post(const std::string& path, const std::string& body, CallCost& cost) const;
  SampleBatch sample(std::string_view context, std::uint32_t n, std::uint64_t seed,
                     bool whole_reply);

  Options options_;
  std::map<std::string, std::string> headers_;
};

}  // namespace mia
