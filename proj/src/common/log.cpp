#include "matxfer/common/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>

namespace matxfer::log {
namespace {
std::atomic<int> g_level{static_cast<int>(Level::warn)};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_once_mutex;
std::set<std::string> g_once_keys;
}  // namespace

void set_level(Level level) { g_level = static_cast<int>(level); }
Level level() { return static_cast<Level>(g_level.load()); }

void warn(const std::string& msg) {
  ++g_warnings;
  if (g_level >= static_cast<int>(Level::warn)) std::cerr << "warning: " << msg << '\n';
}

void warn_once(const std::string& key, const std::string& msg) {
  bool first;
  {
    std::lock_guard lock(g_once_mutex);
    first = g_once_keys.insert(key).second;
  }
  if (first) {
    warn(msg + " (repeats suppressed)");
  } else {
    ++g_warnings;
  }
}

void info(const std::string& msg) {
  if (g_level >= static_cast<int>(Level::info)) std::cerr << msg << '\n';
}

std::size_t warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings = 0; }

}  // namespace matxfer::log
