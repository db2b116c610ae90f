// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace tbk {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Later assignments (including CLI overrides) win.
class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Applies "key=value" overrides on top of the file.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Canonical text form (sorted keys); stable input for config hashing.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tbk
