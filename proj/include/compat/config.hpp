#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "compat/dataset.hpp"
#include "compat/error.hpp"

namespace compat {

// Flat `key = value` settings. '#' starts a comment line; blank lines are
// ignored; whitespace around keys and values is trimmed.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}
}  // namespace detail

inline ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = detail::trim(text.substr(pos, end - pos));
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("config line lacks '='", pos);
      const auto key = detail::trim(line.substr(0, eq));
      const auto value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError("config line has an empty key", pos);
      if (!out.emplace(std::string(key), std::string(value)).second)
        throw StructuralError("config key '" + std::string(key) + "' given twice");
    }
    pos = end + 1;
  }
  return out;
}

inline std::string format_config(const ConfigMap& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) out += k + " = " + v + "\n";
  return out;
}

// Resolved settings for one subcommand. Only declared keys are accepted;
// later layers override earlier ones.
class Settings {
 public:
  void declare(const std::string& key, std::string default_value) {
    values_[key] = std::move(default_value);
  }

  bool declared(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) {
    if (!declared(key)) throw ArgumentError("unknown setting '" + key + "'");
    values_[key] = std::move(value);
  }

  void merge(const ConfigMap& layer) {
    for (const auto& [k, v] : layer) set(k, v);
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ArgumentError("unknown setting '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
      throw ArgumentError("setting '" + key + "' is not a number: '" + s + "'");
    return v;
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      throw ArgumentError("setting '" + key + "' is not a non-negative integer: '" + s + "'");
    return v;
  }

  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ArgumentError("setting '" + key + "' is not a boolean: '" + s + "'");
  }

  const ConfigMap& values() const noexcept { return values_; }
  std::string format() const { return format_config(values_); }

 private:
  ConfigMap values_;
};

inline constexpr const char* kSeedEnv = "COMPAT_GRAPH_SEED";

// The seed default: COMPAT_GRAPH_SEED when set, else `fallback`.
inline std::string default_seed(std::uint64_t fallback = 1) {
  if (const char* env = std::getenv(kSeedEnv); env && *env) {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ArgumentError(std::string(kSeedEnv) + " is not a non-negative integer: '" + env + "'");
    return std::string(s);
  }
  return std::to_string(fallback);
}

inline ConfigMap load_config_file(const std::string& path) {
  return parse_config(read_text_file(path));
}

}  // namespace compat
