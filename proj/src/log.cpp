#include "fiberlab/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace fiberlab {

namespace {

std::atomic<LogLevel> g_level{LogLevel::warning};
std::atomic<long long> g_warnings{0};
std::mutex g_mutex;

constexpr std::string_view tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
    case LogLevel::silent: break;
  }
  return "";
}

}  // namespace

void set_log_level(LogLevel level) noexcept { g_level = level; }
LogLevel log_level() noexcept { return g_level; }
long long warning_count() noexcept { return g_warnings; }

void log(LogLevel level, std::string_view message) {
  if (level >= LogLevel::warning) ++g_warnings;
  if (level < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[fiberlab " << tag(level) << "] " << message << '\n';
}

}  // namespace fiberlab
