#include "dshift/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>

namespace dshift::log {

namespace {

std::atomic<Level> g_level{Level::quiet};
std::mutex g_mutex;

void emit(const std::string& message) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%d %H:%M:%S", &tm);
  std::lock_guard lock(g_mutex);
  std::fprintf(stderr, "[%s] %s\n", stamp, message.c_str());
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void info(const std::string& message) {
  if (g_level >= Level::info) emit(message);
}

void debug(const std::string& message) {
  if (g_level >= Level::debug) emit(message);
}

}  // namespace dshift::log
