#include "famed/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace famed::log {

namespace {

Level initial_level() {
  const char* env = std::getenv("FAMED_LOG");
  if (!env) return Level::Info;
  const std::string v(env);
  if (v == "debug") return Level::Debug;
  if (v == "warn") return Level::Warn;
  if (v == "error") return Level::Error;
  if (v == "off") return Level::Off;
  return Level::Info;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{initial_level()};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void set_level(Level level) { current() = level; }
Level level() { return current(); }

void write(Level lvl, std::string_view message) {
  if (lvl < current() || lvl == Level::Off) return;
  static constexpr const char* tags[] = {"debug", "info", "warning", "error"};
  std::lock_guard lock(sink_mutex());
  std::cerr << tags[static_cast<int>(lvl)] << ": " << message << '\n';
}

}  // namespace famed::log
