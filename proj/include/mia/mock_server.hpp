#pragma once

#include <memory>
#include <string>

#include "mia/ngram_oracle.hpp"

namespace mia {

/// Serves an NGramOracle over the chat-completion wire protocol.
///
/// Routes: POST /v1/chat/completions, POST /tokenize, GET /health. Sampling
/// uses the request's "seed" when present and otherwise a seed derived from
/// the SHA-256 of the request body, so identical requests get identical
/// replies.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<const NGramOracle> oracle);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds to `host`:`port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop().
  void run();
  void stop();

  std::string base_url() const;
  const std::string& oracle_digest() const { return digest_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string digest_;
};

}  // namespace mia
