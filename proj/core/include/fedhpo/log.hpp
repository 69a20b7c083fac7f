#pragma once

#include <string>

namespace fedhpo {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kNone = 4 };

// Threshold from the FEDHPO_LOG environment variable
// (debug|info|warn|error|none); defaults to warn.
LogLevel log_level();

void log_message(LogLevel level, const std::string& message);

#define FEDHPO_LOG_DEBUG(msg) ::fedhpo::log_message(::fedhpo::LogLevel::kDebug, (msg))
#define FEDHPO_LOG_INFO(msg) ::fedhpo::log_message(::fedhpo::LogLevel::kInfo, (msg))
#define FEDHPO_LOG_WARN(msg) ::fedhpo::log_message(::fedhpo::LogLevel::kWarn, (msg))
#define FEDHPO_LOG_ERROR(msg) ::fedhpo::log_message(::fedhpo::LogLevel::kError, (msg))

}  // namespace fedhpo
