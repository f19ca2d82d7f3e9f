#pragma once

#include <string_view>

namespace xsa {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

/// Level is read once from XSADAPT_LOG (debug|info|warn|error|off); default warn.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_message(LogLevel level, std::string_view msg);
inline void log_debug(std::string_view msg) { log_message(LogLevel::debug, msg); }
inline void log_info(std::string_view msg) { log_message(LogLevel::info, msg); }
inline void log_warn(std::string_view msg) { log_message(LogLevel::warn, msg); }
inline void log_error(std::string_view msg) { log_message(LogLevel::error, msg); }

}  // namespace xsa
