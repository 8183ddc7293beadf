#pragma once

#include <string_view>

namespace recnn {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Threshold read once from RECNN_LOG (error|warn|info|debug); default warn.
LogLevel log_level();
void set_log_level(LogLevel level);

/// Writes "[recnn level] message" to stderr when `level` passes the threshold.
void log(LogLevel level, std::string_view message);

}  // namespace recnn
