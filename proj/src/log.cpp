#include "contir/log.hpp"

#include <iostream>
#include <utility>

namespace contir {

namespace {
thread_local LogSink current_sink;
}

std::string_view level_name(LogLevel level) {
  switch (level) {
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
  }
  return "unknown";
}

void log_message(LogLevel level, std::string_view message) {
  if (current_sink) {
    current_sink(level, message);
    return;
  }
  if (level != LogLevel::info) {
    std::cerr << "[" << level_name(level) << "] " << message << '\n';
  }
}

ScopedLogSink::ScopedLogSink(LogSink sink)
    : previous_(std::exchange(current_sink, std::move(sink))) {}

ScopedLogSink::~ScopedLogSink() { current_sink = std::move(previous_); }

}  // namespace contir
