#pragma once

// Human-readable logging to stderr. Verbosity comes from MASTAF_LOG
// (error|warn|info|debug, default info).

#include <cstdio>
#include <utility>

#include <fmt/core.h>

namespace mastaf::log {

enum class Level { kError = 0, kWarn, kInfo, kDebug };

Level level();
void set_level(Level l);

template <typename... Args>
void write(Level l, const char* tag, fmt::format_string<Args...> f, Args&&... args) {
  if (static_cast<int>(l) > static_cast<int>(level())) return;
  fmt::print(stderr, "[{}] {}\n", tag, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::kError, "error", f, std::forward<Args>(args)...);
}
template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::kWarn, "warn", f, std::forward<Args>(args)...);
}
template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::kInfo, "info", f, std::forward<Args>(args)...);
}
template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::kDebug, "debug", f, std::forward<Args>(args)...);
}

}  // namespace mastaf::log
