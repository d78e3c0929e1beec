#pragma once

#include <sstream>
#include <string>

namespace tsp {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Level comes from the TSPKIT_LOG environment variable (error, warn, info,
// debug). Unset or unrecognized values mean warn.
LogLevel log_level();
void set_log_level(LogLevel level);
bool log_enabled(LogLevel level);
void log_line(LogLevel level, const std::string& msg);

namespace detail {
template <typename... Parts>
void log_parts(LogLevel level, const Parts&... parts) {
  if (!log_enabled(level)) return;
  std::ostringstream os;
  (os << ... << parts);
  log_line(level, os.str());
}
}  // namespace detail

template <typename... Parts>
void log_error(const Parts&... parts) {
  detail::log_parts(LogLevel::kError, parts...);
}
template <typename... Parts>
void log_warn(const Parts&... parts) {
  detail::log_parts(LogLevel::kWarn, parts...);
}
template <typename... Parts>
void log_info(const Parts&... parts) {
  detail::log_parts(LogLevel::kInfo, parts...);
}
template <typename... Parts>
void log_debug(const Parts&... parts) {
  detail::log_parts(LogLevel::kDebug, parts...);
}

}  // namespace tsp
