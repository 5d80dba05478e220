#include "gresynth/log.hpp"

#include <iostream>
#include <mutex>

namespace gresynth {
namespace {

std::mutex g_mutex;
LogSink g_sink;
bool g_quiet = false;

void emit(const std::string& line) {
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(line);
  } else {
    std::cerr << line << '\n';
  }
}

}  // namespace

void warn(const std::string& message) { emit("warning: " + message); }

void info(const std::string& message) {
  {
    std::lock_guard lock(g_mutex);
    if (g_quiet) return;
  }
  emit(message);
}

void set_log_sink(LogSink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void set_quiet(bool quiet) {
  std::lock_guard lock(g_mutex);
  g_quiet = quiet;
}

}  // namespace gresynth
