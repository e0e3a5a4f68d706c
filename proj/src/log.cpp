#include "mia/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

#include "mia/errors.hpp"

namespace mia {
namespace {

std::atomic<LogLevel> g_level{LogLevel::warn};
std::mutex g_mutex;

const char* tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug:
      return "debug";
    case LogLevel::info:
      return "info";
    case LogLevel::warn:
      return "warn";
    default:
      return "error";
  }
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

LogLevel log_level_from_string(std::string_view name) {
  if (name == "debug") return LogLevel::debug;
  if (name == "info") return LogLevel::info;
  if (name == "warn") return LogLevel::warn;
  if (name == "error") return LogLevel::error;
  if (name == "off") return LogLevel::off;
  throw ConfigError("unknown log level '" + std::string(name) + "'");
}

void log_message(LogLevel level, std::string_view message) {
  if (level < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag(level) << "] " << message << '\n';
}

}  // namespace mia
