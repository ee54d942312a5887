#include "matxfer/common/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/raster_io.hpp"

namespace matxfer {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']' && line.size() > 2, "config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
    require(!section.empty(), "config line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
    c.sections_[section][key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), "config file not found: " + path.string());
  return parse(io::read_text(path));
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}
void Config::set(const std::string& section, const std::string& key, double value) {
  set(section, key, format_real(value));
}
void Config::set(const std::string& section, const std::string& key, long value) {
  set(section, key, std::to_string(value));
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key);
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
  return has(section, key) ? sections_.at(section).at(key) : fallback;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = sections_.at(section).at(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  require(!v.empty() && *end == '\0', "config " + section + "." + key + ": not a number: '" + v + "'");
  return d;
}

long Config::get_long(const std::string& section, const std::string& key, long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = sections_.at(section).at(key);
  char* end = nullptr;
  const long d = std::strtol(v.c_str(), &end, 10);
  require(!v.empty() && *end == '\0', "config " + section + "." + key + ": not an integer: '" + v + "'");
  return d;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = sections_.at(section).at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config " + section + "." + key + ": not a boolean: '" + v + "'");
}

void Config::merge(const Config& overrides) {
  for (const auto& [s, kv] : overrides.sections_)
    for (const auto& [k, v] : kv) sections_[s][k] = v;
}

void Config::check_known(const Config& defaults) const {
  for (const auto& [s, kv] : sections_)
    for (const auto& [k, v] : kv)
      require(defaults.has(s, k), "unknown config key " + s + "." + k);
}

std::string Config::format() const {
  std::string out;
  for (const auto& [s, kv] : sections_) {
    if (!out.empty()) out += "\n";
    out += "[" + s + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

std::string Config::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : format()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace matxfer
