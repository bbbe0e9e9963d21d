// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace pgen {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Verbosity comes from PGEN_LOG in {error, info, debug}; default info.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("PGEN_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    std::string s(env);
    if (s == "error") return LogLevel::kError;
    if (s == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

namespace detail {
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

template <typename... Args>
void log_at(LogLevel level, const char* tag, Args&&... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::ostringstream oss;
  oss << "[pgen " << tag << "] ";
  (oss << ... << args);
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::cerr << oss.str() << "\n";
}

template <typename... Args>
void log_error(Args&&... args) {
  log_at(LogLevel::kError, "error", std::forward<Args>(args)...);
}

template <typename... Args>
void log_info(Args&&... args) {
  log_at(LogLevel::kInfo, "info", std::forward<Args>(args)...);
}

template <typename... Args>
void log_debug(Args&&... args) {
  log_at(LogLevel::kDebug, "debug", std::forward<Args>(args)...);
}

}  // namespace pgen
