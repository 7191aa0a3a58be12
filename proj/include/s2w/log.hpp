#pragma once

#include <iostream>
#include <mutex>
#include <sstream>

namespace s2w {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

namespace detail {
inline LogLevel& log_threshold() {
  static LogLevel level = LogLevel::kInfo;
  return level;
}
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
inline const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kError: return "error";
  }
  return "?";
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_threshold() = level; }

// All progress output goes to stderr so stdout stays machine-consumable.
inline void log_message(LogLevel level, const std::string& msg) {
  if (level < detail::log_threshold()) return;
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::cerr << "[s2w " << detail::level_tag(level) << "] " << msg << "\n";
}

inline void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::kWarn, msg); }
inline void log_error(const std::string& msg) { log_message(LogLevel::kError, msg); }

}  // namespace s2w
