#include "tabncd/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace tabncd {

namespace {

LogLevel level_from_env() {
  const char* env = std::getenv("TABNCD_VERBOSITY");
  if (env == nullptr) return LogLevel::warn;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "info" || v == "2") return LogLevel::info;
  if (v == "debug" || v == "3") return LogLevel::debug;
  return LogLevel::warn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(level_from_env())};
  return level;
}

void emit(LogLevel at, const char* tag, std::string_view message) {
  if (static_cast<int>(at) > level_storage().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[" << tag << "] " << message << '\n';
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }
void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

void log_warn(std::string_view message) { emit(LogLevel::warn, "warn", message); }
void log_info(std::string_view message) { emit(LogLevel::info, "info", message); }
void log_debug(std::string_view message) { emit(LogLevel::debug, "debug", message); }

}  // namespace tabncd
