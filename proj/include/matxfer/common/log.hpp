#pragma once

#include <string>

namespace matxfer::log {

enum class Level { quiet = 0, warn = 1, info = 2 };

void set_level(Level level);
Level level();

void warn(const std::string& msg);
/// Counts every call but prints only the first one per key.
void warn_once(const std::string& key, const std::string& msg);
void info(const std::string& msg);

/// Number of warnings emitted since the last reset; lets tests assert that
/// a degenerate case was flagged.
std::size_t warning_count();
void reset_warning_count();

}  // namespace matxfer::log
