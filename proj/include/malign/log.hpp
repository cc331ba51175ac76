#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

namespace malign {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

using LogSink = std::function<void(LogLevel, std::string_view)>;

namespace detail {

struct LogState {
  std::mutex mutex;
  LogLevel threshold = LogLevel::warning;
  LogSink sink = [](LogLevel level, std::string_view message) {
    static constexpr const char* kNames[] = {"debug", "info", "warning", "error"};
    std::cerr << "[malign " << kNames[static_cast<int>(level)] << "] " << message << '\n';
  };
};

inline LogState& log_state() {
  static LogState state;
  return state;
}

}  // namespace detail

inline void set_log_level(LogLevel level) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  s.threshold = level;
}

// Replaces the sink; returns the previous one so tests can restore it.
inline LogSink set_log_sink(LogSink sink) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  return std::exchange(s.sink, std::move(sink));
}

inline void log(LogLevel level, std::string_view message) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  if (level < s.threshold || !s.sink) return;
  s.sink(level, message);
}

inline void log_info(std::string_view message) { log(LogLevel::info, message); }
inline void log_warning(std::string_view message) { log(LogLevel::warning, message); }

}  // namespace malign
