#include "mastaf/log.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace mastaf::log {
namespace {

Level from_env() {
  const char* env = std::getenv("MASTAF_LOG");
  if (env == nullptr) return Level::kInfo;
  const std::string_view v(env);
  if (v == "error") return Level::kError;
  if (v == "warn") return Level::kWarn;
  if (v == "debug") return Level::kDebug;
  return Level::kInfo;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(from_env())};
  return lvl;
}

}  // namespace

Level level() { return static_cast<Level>(current().load(std::memory_order_relaxed)); }
void set_level(Level l) { current().store(static_cast<int>(l), std::memory_order_relaxed); }

}  // namespace mastaf::log
