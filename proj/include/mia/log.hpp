#pragma once

#include <string_view>

namespace mia {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
LogLevel log_level_from_string(std::string_view name);

/// Writes one line to stderr when `level` passes the global threshold.
void log_message(LogLevel level, std::string_view message);

inline void log_debug(std::string_view m) { log_message(LogLevel::debug, m); }
inline void log_info(std::string_view m) { log_message(LogLevel::info, m); }
inline void log_warn(std::string_view m) { log_message(LogLevel::warn, m); }

}  // namespace mia
