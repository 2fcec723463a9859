#pragma once

#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "roteq/common.hpp"

namespace roteq {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// key=value lines; '#' starts a comment; blank lines ignored.
inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    m[key] = val;
  }
  return m;
}

inline ConfigMap load_config(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open config: " + path);
  std::string text;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);
  return parse_config_text(text);
}

inline std::string serialize_config(const ConfigMap& m) {
  std::string out;
  for (const auto& [k, v] : m) out += k + "=" + v + "\n";
  return out;
}

inline void require_known_keys(const ConfigMap& m,
                               const std::set<std::string>& allowed) {
  for (const auto& [k, _] : m)
    if (!allowed.count(k)) throw ConfigError("unknown config key: " + k);
}

inline int get_int(const ConfigMap& m, const std::string& key, int def) {
  auto it = m.find(key);
  if (it == m.end()) return def;
  try {
    size_t pos;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw ConfigError("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

inline double get_double(const ConfigMap& m, const std::string& key, double def) {
  auto it = m.find(key);
  if (it == m.end()) return def;
  try {
    size_t pos;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw ConfigError("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

inline bool get_bool(const ConfigMap& m, const std::string& key, bool def) {
  auto it = m.find(key);
  if (it == m.end()) return def;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a bool: " + it->second);
}

inline std::string get_string(const ConfigMap& m, const std::string& key,
                              const std::string& def) {
  auto it = m.find(key);
  return it == m.end() ? def : it->second;
}

/// Comma-separated integer list.
inline std::vector<int> get_int_list(const ConfigMap& m, const std::string& key,
                                     const std::vector<int>& def) {
  auto it = m.find(key);
  if (it == m.end()) return def;
  std::vector<int> out;
  std::istringstream in(it->second);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = detail::trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw ConfigError("config key '" + key + "' has a bad element: " + tok);
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace roteq
