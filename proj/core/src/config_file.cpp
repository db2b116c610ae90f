// SPDX-License-Identifier: Apache-2.0
#include "therblig/config_file.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "therblig/error.hpp"

namespace tbk {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& line, int lineno) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
  }
  auto key = trim(line.substr(0, eq));
  if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
  return {key, trim(line.substr(eq + 1))};
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto [k, v] = split_assignment(t, lineno);
    cfg.values_[k] = v;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ConfigFile::apply_override(const std::string& assignment) {
  auto [k, v] = split_assignment(assignment, 0);
  values_[k] = v;
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not a number: " + *v);
  }
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size())
    throw ValidationError("config key '" + key + "': not an integer: " + *v);
  return out;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ValidationError("config key '" + key + "': not a boolean: " + *v);
}

std::string ConfigFile::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace tbk
