#include "ocufuse/logging.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace ocufuse {

namespace {

LogLevel g_level = LogLevel::warn;
std::once_flag g_init_flag;
std::mutex g_io_mutex;

void init_from_env() {
  const char* env = std::getenv("OCUFUSE_LOG");
  if (env == nullptr) return;
  const std::string v(env);
  if (v == "debug") g_level = LogLevel::debug;
  else if (v == "info") g_level = LogLevel::info;
  else if (v == "warn") g_level = LogLevel::warn;
  else if (v == "error") g_level = LogLevel::err;
  else if (v == "quiet") g_level = LogLevel::quiet;
}

void emit(LogLevel level, const char* tag, const std::string& msg) {
  std::call_once(g_init_flag, init_from_env);
  if (static_cast<int>(level) < static_cast<int>(g_level)) return;
  std::lock_guard<std::mutex> lock(g_io_mutex);
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

}  // namespace

LogLevel log_level() {
  std::call_once(g_init_flag, init_from_env);
  return g_level;
}

void set_log_level(LogLevel level) {
  std::call_once(g_init_flag, init_from_env);
  g_level = level;
}

void log_debug(const std::string& msg) { emit(LogLevel::debug, "debug", msg); }
void log_info(const std::string& msg) { emit(LogLevel::info, "info", msg); }
void log_warn(const std::string& msg) { emit(LogLevel::warn, "warn", msg); }
void log_error(const std::string& msg) { emit(LogLevel::err, "error", msg); }

}  // namespace ocufuse
