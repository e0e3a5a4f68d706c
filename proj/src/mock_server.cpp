#include "mia/mock_server.hpp"

#include <httplib.h>

#include <json.hpp>

#include <thread>

#include "mia/digest.hpp"
#include "mia/errors.hpp"
#include "mia/http_backend.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"message", message}}}}.dump(), "application/json");
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

struct MockServer::Impl {
  std::shared_ptr<const NGramOracle> oracle;
  httplib::Server server;
  std::string host;
  int port = 0;
  std::thread thread;

  void completions(const httplib::Request& req, httplib::Response& res) const;
  void tokenize(const httplib::Request& req, httplib::Response& res) const;
};

void MockServer::Impl::completions(const httplib::Request& req, httplib::Response& res) const {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception& e) {
    return reply_error(res, 400, std::string("malformed JSON: ") + e.what());
  }
  std::string system;
  std::string user;
  std::uint32_t n = 1;
  std::uint32_t max_tokens = 8;
  double temperature = 1.0;
  bool logprobs = false;
  std::uint32_t top_logprobs = 0;
  try {
    for (const auto& m : body.at("messages")) {
      const auto role = m.at("role").get<std::string>();
      if (role == "system") system = m.at("content").get<std::string>();
      if (role == "user") user = m.at("content").get<std::string>();
    }
    n = body.value("n", 1u);
    max_tokens = body.value("max_tokens", 8u);
    temperature = body.value("temperature", 1.0);
    logprobs = body.value("logprobs", false);
    top_logprobs = body.value("top_logprobs", 0u);
  } catch (const json::exception& e) {
    return reply_error(res, 422, std::string("invalid request fields: ") + e.what());
  }
  const bool next_word = system == kNextWordSystemPrompt;
  const bool continuation = system == kContinuationSystemPrompt;
  if (!next_word && !continuation) return reply_error(res, 422, "unrecognized system prompt");
  if (!user.starts_with(kUserPromptMarker)) {
    return reply_error(res, 422, "user message lacks the 'Text so far:' marker");
  }
  if (n < 1 || max_tokens < 1) return reply_error(res, 422, "n and max_tokens must be positive");
  if (!(temperature > 0.0)) return reply_error(res, 422, "temperature must be positive");

  const std::uint64_t seed = body.contains("seed") && body["seed"].is_number_unsigned()
                                 ? body["seed"].get<std::uint64_t>()
                                 : leading_u64(sha256(req.body));
  OracleBackend::Options options;
  options.temperature = temperature;
  const OracleBackend backend(oracle, options);
  const auto state = oracle->encode(std::string_view(user).substr(kUserPromptMarker.size()));

  json choices = json::array();
  if (continuation) {
    for (std::uint32_t j = 0; j < n; ++j) {
      const auto words = backend.continuation(state, max_tokens, seed, j);
      choices.push_back({{"index", j},
                         {"message", {{"role", "assistant"}, {"content", join_words(words)}}},
                         {"finish_reason", "length"}});
    }
  } else {
    const auto words = backend.sample_words(state, n, seed);
    for (std::uint32_t j = 0; j < n; ++j) {
      choices.push_back({{"index", j},
                         {"message", {{"role", "assistant"}, {"content", words[j]}}},
                         {"finish_reason", "stop"}});
    }
    if (logprobs) {
      const auto ranked = backend.ranked_candidates(state, std::max(top_logprobs, 1u));
      json top = json::array();
      for (const auto& c : ranked) top.push_back({{"token", c.token}, {"logprob", c.logprob}});
      choices[0]["logprobs"] = {
          {"content",
           {{{"token", ranked.front().token}, {"logprob", ranked.front().logprob},
             {"top_logprobs", top}}}}};
    }
  }
  const json out = {{"object", "chat.completion"},
                    {"model", body.value("model", std::string("ngram-oracle"))},
                    {"choices", choices}};
  res.set_content(out.dump(), "application/json");
}

void MockServer::Impl::tokenize(const httplib::Request& req, httplib::Response& res) const {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception& e) {
    return reply_error(res, 400, std::string("malformed JSON: ") + e.what());
  }
  if (!body.contains("text") || !body["text"].is_string()) {
    return reply_error(res, 422, "missing 'text'");
  }
  json tokens = json::array();
  for (const auto& w : tokenize_words(body["text"].get<std::string>())) {
    tokens.push_back({{"text", w.surface}, {"start", w.span.begin}, {"end", w.span.end}});
  }
  res.set_content(json{{"tokens", tokens}}.dump(), "application/json");
}

MockServer::MockServer(std::shared_ptr<const NGramOracle> oracle)
    : impl_(std::make_unique<Impl>()) {
  if (!oracle) throw ConfigError("mock server requires a trained oracle");
  impl_->oracle = std::move(oracle);
  digest_ = impl_->oracle->digest();
  auto* impl = impl_.get();
  impl->server.Post("/v1/chat/completions", [impl](const httplib::Request& req,
                                                   httplib::Response& res) {
    impl->completions(req, res);
  });
  impl->server.Post("/tokenize", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->tokenize(req, res);
  });
  const std::string digest = digest_;
  impl->server.Get("/health", [digest](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}, {"oracle_digest", digest}}.dump(), "application/json");
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) {
    throw ConfigError("cannot bind mock server to " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void MockServer::start() {
  impl_->thread = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockServer::run() { impl_->server.listen_after_bind(); }

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::base_url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace mia
