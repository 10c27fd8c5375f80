#include "poseval/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace poseval::log {

namespace {

Level from_env() {
  const char* v = std::getenv("POSEVAL_LOG");
  if (!v) return Level::warn;
  const std::string s(v);
  if (s == "debug") return Level::debug;
  if (s == "info") return Level::info;
  if (s == "warn") return Level::warn;
  if (s == "error") return Level::error;
  if (s == "off") return Level::off;
  return Level::warn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

constexpr const char* kNames[] = {"debug", "info", "warn", "error"};

}  // namespace

Level threshold() { return static_cast<Level>(level_storage().load()); }

void set_threshold(Level level) { level_storage().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
  if (level < threshold() || level == Level::off) return;
  std::lock_guard lock(sink_mutex());
  std::cerr << "[poseval " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace poseval::log
