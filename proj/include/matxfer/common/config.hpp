#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace matxfer {

/// Sectioned key-value settings:
///
///   [section]
///   key = value   # comment
///
/// Values are kept as text and converted on access. format() is canonical
/// (sorted sections and keys), so equal configs print identical bytes.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  void set(const std::string& section, const std::string& key, double value);
  void set(const std::string& section, const std::string& key, long value);
  void set(const std::string& section, const std::string& key, int value) { set(section, key, static_cast<long>(value)); }

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_long(const std::string& section, const std::string& key, long fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const {
    return static_cast<int>(get_long(section, key, fallback));
  }
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  /// Values from `overrides` replace or extend this config.
  void merge(const Config& overrides);

  /// Throws ValidationError naming the first key that `defaults` does not know.
  void check_known(const Config& defaults) const;

  std::string format() const;
  /// FNV-1a 64 over format(), as 16 hex digits.
  std::string fingerprint() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }
  friend bool operator==(const Config&, const Config&) = default;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

std::string format_real(double v);  // shortest round-trip text, "%.17g" style

}  // namespace matxfer
