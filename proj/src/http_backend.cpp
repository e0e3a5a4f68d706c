#include "mia/http_backend.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <thread>

#include "mia/digest.hpp"
#include "mia/errors.hpp"
#include "mia/http_util.hpp"
#include "mia/log.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

json chat_body(const HttpChatBackend::Options& o, std::string_view system, std::string_view user,
               std::uint32_t max_tokens, std::uint32_t n, std::uint64_t seed) {
  json body = {{"model", o.model},
               {"messages",
                {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}}},
               {"temperature", o.temperature},
               {"max_tokens", max_tokens},
               {"n", n}};
  if (o.send_seed) body["seed"] = seed;
  return body;
}

std::vector<std::string> choice_contents(const std::string& body) {
  std::vector<std::string> out;
  const json parsed = json::parse(body);
  for (const auto& choice : parsed.at("choices")) {
    const auto& content = choice.at("message").at("content");
    out.push_back(content.is_string() ? content.get<std::string>() : std::string());
  }
  return out;
}

std::string trim_token(std::string_view reply) {
  const auto first = reply.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return std::string(kEmptySentinel);
  const auto last = reply.find_last_not_of(" \t\r\n");
  return fold(reply.substr(first, last - first + 1));
}

std::chrono::milliseconds retry_after(const HttpResponse& r) {
  const auto header = r.header("Retry-After");
  if (!header) return std::chrono::milliseconds{-1};
  char* end = nullptr;
  const double seconds = std::strtod(header->c_str(), &end);
  if (end == header->c_str() || !(seconds >= 0.0)) return std::chrono::milliseconds{-1};
  return std::chrono::milliseconds{static_cast<long long>(seconds * 1000.0)};
}

}  // namespace

std::string next_word_user_prompt(std::string_view prefix) {
  return std::string(kUserPromptMarker) + std::string(prefix);
}

std::uint64_t chunk_seed(std::uint64_t seed, std::uint32_t index) {
  if (index == 0) return seed;
  return leading_u64(sha256(std::to_string(seed) + "|chunk|" + std::to_string(index)));
}

HttpChatBackend::HttpChatBackend(Options options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("HTTP backend needs a base_url");
  if (options_.max_n_per_request < 1) throw ConfigError("max_n_per_request must be positive");
  if (options_.max_attempts < 1) throw ConfigError("max_attempts must be positive");
  if (!(options_.failure_budget >= 0.0 && options_.failure_budget <= 1.0)) {
    throw ConfigError("failure_budget must lie in [0, 1]");
  }
  if (!options_.api_key_env.empty()) {
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable " + options_.api_key_env + " is not set");
    }
    headers_[options_.auth_header] = options_.auth_prefix + key;
  }
}

HttpChatBackend::Reply HttpChatBackend::post(const std::string& path, const std::string& body,
                                             CallCost& cost) const {
  ++cost.requests;
  auto delay = options_.backoff_initial;
  for (std::uint32_t attempt = 1;; ++attempt) {
    const auto r = http_post_json(options_.base_url, path, body, headers_, options_.timeout);
    if (r.status == 200) return {true, r.body};
    const bool retryable = r.status == 0 || r.status == 429 || r.status >= 500;
    if (!retryable) {
      std::string message = r.body;
      try {
        const json parsed = json::parse(r.body);
        if (parsed.contains("error")) {
          const auto& e = parsed.at("error");
          message = e.is_object() && e.contains("message") ? e.at("message").get<std::string>()
                                                           : e.dump();
        }
      } catch (const json::exception&) {
      }
      throw ProviderError(r.status, message);
    }
    if (attempt >= options_.max_attempts) {
      log_warn("giving up on " + options_.base_url + path + " after " + std::to_string(attempt) +
               " attempts (" + (r.status == 0 ? r.transport_error : std::to_string(r.status)) +
               ")");
      return {false, {}};
    }
    ++cost.retries;
    auto wait = delay;
    if (const auto hinted = retry_after(r); hinted.count() >= 0) wait = std::max(wait, hinted);
    std::this_thread::sleep_for(wait);
    delay = std::chrono::milliseconds{
        static_cast<long long>(static_cast<double>(delay.count()) * options_.backoff_factor)};
  }
}

SampleBatch HttpChatBackend::sample(std::string_view context, std::uint32_t n,
                                    std::uint64_t seed, bool whole_reply) {
  if (context.empty()) throw ConfigError("HTTP backend cannot sample from an empty context");
  const std::string user = next_word_user_prompt(context);
  std::vector<std::string> words;
  std::vector<std::string> raw;
  CallCost cost;
  std::uint32_t failed = 0;
  std::uint32_t chunk = 0;
  for (std::uint32_t done = 0; done < n; ++chunk) {
    const std::uint32_t m = std::min(options_.max_n_per_request, n - done);
    const auto body = chat_body(options_, kNextWordSystemPrompt, user, whole_reply ? 1 : 8, m,
                                chunk_seed(seed, chunk));
    const auto reply = post(options_.chat_path, body.dump(), cost);
    std::vector<std::string> contents;
    if (reply.ok) {
      try {
        contents = choice_contents(reply.body);
      } catch (const json::exception& e) {
        log_warn(std::string("malformed completion response: ") + e.what());
      }
    }
    contents.resize(std::min<std::size_t>(contents.size(), m));
    for (const auto& c : contents) {
      raw.push_back(c);
      words.push_back(whole_reply ? trim_token(c) : parse_next_word_reply(c));
    }
    // Requests that never succeeded still occupy their slots as sentinels.
    if (!reply.ok) {
      for (std::uint32_t j = 0; j < m; ++j) words.emplace_back(kEmptySentinel);
    }
    failed += m - static_cast<std::uint32_t>(reply.ok ? contents.size() : 0);
    done += m;
  }
  auto batch = make_batch(context, words, n, seed, id());
  batch.raw_replies = std::move(raw);
  batch.cost = cost;
  batch.cost.sentinels = batch.sentinel_count();
  const double failed_share = static_cast<double>(batch.sentinel_count() + (n - batch.n_obtained)) / n;
  if (failed_share > options_.failure_budget) {
    throw BudgetError("backend '" + id() + "' failed on " + std::to_string(failed) + " of " +
                      std::to_string(n) + " samples, " + std::to_string(batch.sentinel_count()) +
                      " sentinel replies");
  }
  return batch;
}

SampleBatch HttpChatBackend::do_sample_next_words(std::string_view context, std::uint32_t n,
                                                  std::uint64_t seed) {
  return sample(context, n, seed, false);
}

SampleBatch HttpChatBackend::do_sample_next_tokens(std::string_view context, std::uint32_t n,
                                                   std::uint64_t seed) {
  return sample(context, n, seed, true);
}

Continuations HttpChatBackend::do_generate_continuation(std::string_view context,
                                                        std::uint32_t max_words, std::uint32_t n,
                                                        std::uint64_t seed) {
  const std::string user = next_word_user_prompt(context);
  Continuations out;
  std::uint32_t chunk = 0;
  for (std::uint32_t done = 0; done < n; ++chunk) {
    const std::uint32_t m = std::min(options_.max_n_per_request, n - done);
    const auto body = chat_body(options_, kContinuationSystemPrompt, user, 2 * max_words + 8, m,
                                chunk_seed(seed, chunk));
    const auto reply = post(options_.chat_path, body.dump(), out.cost);
    std::vector<std::string> contents;
    if (reply.ok) {
      try {
        contents = choice_contents(reply.body);
      } catch (const json::exception& e) {
        log_warn(std::string("malformed completion response: ") + e.what());
      }
    }
    contents.resize(m);  // failed or missing choices become empty continuations
    for (const auto& c : contents) {
      out.raw_replies.push_back(c);
      std::vector<std::string> seq;
      for (const auto& w : tokenize_words(c)) {
        if (seq.size() == max_words) break;
        seq.push_back(w.folded);
      }
      if (seq.empty()) ++out.cost.sentinels;
      out.sequences.push_back(std::move(seq));
    }
    done += m;
  }
  if (static_cast<double>(out.cost.sentinels) / n > options_.failure_budget) {
    throw BudgetError("backend '" + id() + "' returned " + std::to_string(out.cost.sentinels) +
                      " empty continuations of " + std::to_string(n));
  }
  return out;
}

std::vector<Word> HttpChatBackend::do_tokenize_units(std::string_view text) {
  CallCost cost;
  const json body = {{"model", options_.model}, {"text", text}};
  const auto reply = post(options_.tokenize_path, body.dump(), cost);
  if (!reply.ok) throw BackendError("tokenize endpoint unavailable");
  std::vector<Word> words;
  try {
    const json parsed = json::parse(reply.body);
    for (const auto& t : parsed.at("tokens")) {
      Word w;
      w.span = {t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>()};
      if (w.span.end < w.span.begin || w.span.end > text.size()) {
        throw BackendError("token span outside the text");
      }
      w.surface = std::string(text.substr(w.span.begin, w.span.size()));
      w.folded = trim_token(w.surface);
      w.is_numeric = is_numeric_word(w.folded);
      words.push_back(std::move(w));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed tokenize response: ") + e.what());
  }
  return words;
}

CandidateList HttpChatBackend::do_top_candidates(std::string_view context, std::uint32_t top_k) {
  CandidateList out;
  auto body = chat_body(options_, kNextWordSystemPrompt, next_word_user_prompt(context), 1, 1, 0);
  body.erase("seed");
  body["logprobs"] = true;
  body["top_logprobs"] = top_k;
  const auto reply = post(options_.chat_path, body.dump(), out.cost);
  if (!reply.ok) throw BackendError("log probability request failed after retries");
  std::map<std::string, double> merged;
  try {
    const json parsed = json::parse(reply.body);
    const auto& first = parsed.at("choices").at(0).at("logprobs").at("content").at(0);
    for (const auto& c : first.at("top_logprobs")) {
      const auto token = c.at("token").get<std::string>();
      out.raw_replies.push_back(token);
      const double lp = c.at("logprob").is_null() ? -std::numeric_limits<double>::infinity()
                                                  : c.at("logprob").get<double>();
      const std::string key = trim_token(token);
      auto [it, inserted] = merged.emplace(key, lp);
      if (!inserted) it->second = std::max(it->second, lp);
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed logprob response: ") + e.what());
  }
  for (const auto& [token, lp] : merged) out.candidates.push_back({token, lp});
  std::stable_sort(out.candidates.begin(), out.candidates.end(),
                   [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
  if (out.candidates.size() > top_k) out.candidates.resize(top_k);
  return out;
}

double HttpChatBackend::do_unit_logprob(std::string_view context, std::string_view unit) {
  // Chat APIs only report the top alternatives; a unit outside them is
  // bounded above by the least likely reported candidate.
  const auto list = do_top_candidates(context, options_.top_logprobs);
  const std::string target = fold(unit);
  double floor = 0.0;
  for (const auto& c : list.candidates) {
    if (c.token == target) return c.logprob;
    floor = std::min(floor, c.logprob);
  }
  return list.candidates.empty() ? -std::numeric_limits<double>::infinity() : floor;
}

}  // namespace mia
