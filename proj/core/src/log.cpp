#include "fedhpo/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <string_view>

namespace fedhpo {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FEDHPO_LOG");
    if (env == nullptr) return LogLevel::kWarn;
    const std::string_view v(env);
    if (v == "debug") return LogLevel::kDebug;
    if (v == "info") return LogLevel::kInfo;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "error") return LogLevel::kError;
    if (v == "none") return LogLevel::kNone;
    return LogLevel::kWarn;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& message) {
  if (level < log_level()) return;
  const char* tag = "info";
  switch (level) {
    case LogLevel::kDebug: tag = "debug"; break;
    case LogLevel::kInfo: tag = "info"; break;
    case LogLevel::kWarn: tag = "warn"; break;
    case LogLevel::kError: tag = "error"; break;
    case LogLevel::kNone: return;
  }
  std::fprintf(stderr, "[fedhpo %s] %s\n", tag, message.c_str());
}

}  // namespace fedhpo
