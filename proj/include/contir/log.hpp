#pragma once

#include <functional>
#include <string_view>

namespace contir {

enum class LogLevel { info, warning, error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Messages go to the sink installed on the calling thread; with no sink
/// installed, warnings and errors are written to stderr.
void log_message(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log_message(LogLevel::info, m); }
inline void log_warning(std::string_view m) { log_message(LogLevel::warning, m); }
inline void log_error(std::string_view m) { log_message(LogLevel::error, m); }

std::string_view level_name(LogLevel level);

/// Installs a thread-local sink for the lifetime of the object.
class ScopedLogSink {
 public:
  explicit ScopedLogSink(LogSink sink);
  ~ScopedLogSink();
  ScopedLogSink(const ScopedLogSink&) = delete;
  ScopedLogSink& operator=(const ScopedLogSink&) = delete;

 private:
  LogSink previous_;
};

}  // namespace contir
