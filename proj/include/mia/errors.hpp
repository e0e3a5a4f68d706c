#pragma once

#include <stdexcept>
#include <string>

namespace mia {

/// Failure categories; each maps to a stable process exit code in the CLI.
enum class ErrorCategory { config = 2, data = 3, backend = 4, budget = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

struct BackendError : Error {
  explicit BackendError(const std::string& what) : Error(ErrorCategory::backend, what) {}
};

/// Raised when a backend lacks the capability tier an operation needs.
struct UnsupportedCapability : BackendError {
  explicit UnsupportedCapability(const std::string& what)
      : BackendError("unsupported capability: " + what) {}
};

/// 4xx responses other than rate limiting; never retried.
struct ProviderError : BackendError {
  ProviderError(int status, const std::string& message)
      : BackendError("provider returned HTTP " + std::to_string(status) + ": " + message),
        status(status) {}
  int status;
};

struct BudgetError : Error {
  explicit BudgetError(const std::string& what) : Error(ErrorCategory::budget, what) {}
};

/// Replay-only lookup that found nothing; counts against the query budget.
struct CacheMiss : BudgetError {
  explicit CacheMiss(const std::string& what) : BudgetError("cache miss in replay-only mode: " + what) {}
};

}  // namespace mia
