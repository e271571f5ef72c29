#pragma once

// Run parameters resolved from defaults, then a config file, then flags.
//
// Config files are flat text: "key = value" lines, '#' comments, and
// "[section]" headers naming a subcommand. Keys before the first header
// apply to every subcommand; keys in other subcommands' sections are ignored.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "perclaw/csv.hpp"
#include "perclaw/errors.hpp"
#include "perclaw/stats.hpp"

namespace perclaw {

struct ParamSpec {
  std::string key;
  std::string default_value;
  std::string help;
  bool required = false;  ///< must be given by file or flag
};

/// Command-line spelling of a parameter key: "--c-over-d" for "c_over_d".
inline std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

enum class ParamSource { default_value, file, flag };

inline const char* to_string(ParamSource s) {
  switch (s) {
    case ParamSource::default_value: return "default";
    case ParamSource::file: return "file";
    case ParamSource::flag: return "flag";
  }
  return "?";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace detail

struct ConfigEntry {
  std::string section;  ///< empty for the global part
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::vector<ConfigEntry> parse_config_text(std::string_view text, const std::string& origin = "config") {
  std::vector<ConfigEntry> out;
  std::string section;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where, where + ": unterminated section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where, where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where, where + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where, where + ": empty key");
    out.push_back({section, std::string(key), std::string(detail::trim(line.substr(eq + 1))), lineno});
  }
  return out;
}

class RunConfig {
 public:
  RunConfig(std::string command, std::vector<ParamSpec> specs) : command_(std::move(command)), specs_(std::move(specs)) {
    for (const auto& s : specs_) values_[s.key] = {s.default_value, ParamSource::default_value};
  }

  const std::string& command() const noexcept { return command_; }
  const std::vector<ParamSpec>& specs() const noexcept { return specs_; }
  bool known(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value, ParamSource source) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "unknown parameter '" + key + "' for " + command_);
    it->second = {std::move(value), source};
  }

  void apply_text(std::string_view text, const std::string& origin) {
    for (const auto& e : parse_config_text(text, origin)) {
      if (!e.section.empty() && e.section != command_) continue;
      if (!known(e.key))
        throw ConfigError(e.key, origin + ":" + std::to_string(e.line) + ": unknown parameter '" + e.key + "' for " + command_);
      set(e.key, e.value, ParamSource::file);
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read config file " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    apply_text(text, path.string());
  }

  void check_required() const {
    for (const auto& s : specs_)
      if (s.required && values_.at(s.key).value.empty())
        throw ConfigError(s.key, "missing required parameter " + flag_name(s.key) + " (config key '" + s.key + "')");
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("RunConfig: undeclared parameter " + key);
    return it->second.value;
  }

  ParamSource source(const std::string& key) const {
    get(key);
    return values_.at(key).source;
  }

  double get_double(const std::string& key) const {
    try {
      return parse_double(get(key));
    } catch (const FormatError&) {
      throw ConfigError(key, "parameter '" + key + "' expects a number, got '" + get(key) + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && end == s.data() + s.size() && !s.empty()) return v;
    double d = 0.0;
    try {
      d = parse_double(s);
    } catch (const FormatError&) {
      throw ConfigError(key, "parameter '" + key + "' expects a non-negative integer, got '" + s + "'");
    }
    if (!(d >= 0.0 && d < 9.0e15 && std::floor(d) == d))
      throw ConfigError(key, "parameter '" + key + "' expects a non-negative integer, got '" + s + "'");
    return static_cast<std::uint64_t>(d);
  }

  std::uint32_t get_u32(const std::string& key) const {
    const auto v = get_u64(key);
    if (v > 0xFFFFFFFFull) throw ConfigError(key, "parameter '" + key + "' is too large");
    return static_cast<std::uint32_t>(v);
  }

  bool get_bool(const std::string& key) const {
    std::string s = get(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError(key, "parameter '" + key + "' expects true or false, got '" + get(key) + "'");
  }

  /// Comma-separated numbers.
  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    std::string_view s = get(key);
    while (true) {
      const auto comma = s.find(',');
      try {
        out.push_back(parse_double(s.substr(0, comma)));
      } catch (const FormatError&) {
        throw ConfigError(key, "parameter '" + key + "' expects comma-separated numbers, got '" + get(key) + "'");
      }
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return out;
  }

  /// Either comma-separated numbers or "lo:hi[:count]", a log-spaced grid
  /// with `default_count` points when the count is omitted.
  std::vector<double> get_grid(const std::string& key, std::size_t default_count) const {
    const std::string& s = get(key);
    if (s.find(':') == std::string::npos) return get_doubles(key);
    std::vector<double> parts;
    std::string_view rest = s;
    while (true) {
      const auto colon = rest.find(':');
      try {
        parts.push_back(parse_double(rest.substr(0, colon)));
      } catch (const FormatError&) {
        throw ConfigError(key, "parameter '" + key + "' expects lo:hi[:count], got '" + s + "'");
      }
      if (colon == std::string_view::npos) break;
      rest.remove_prefix(colon + 1);
    }
    if (parts.size() < 2 || parts.size() > 3 || !(parts[0] > 0.0) || !(parts[1] >= parts[0]) ||
        (parts.size() == 3 && !(parts[2] >= 1.0 && std::floor(parts[2]) == parts[2])))
      throw ConfigError(key, "parameter '" + key + "' expects lo:hi[:count] with 0 < lo <= hi, got '" + s + "'");
    return log_grid(parts[0], parts[1], parts.size() == 3 ? static_cast<std::size_t>(parts[2]) : default_count);
  }

  /// Resolved values as strings, in declaration order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (const auto& s : specs_) j[s.key] = values_.at(s.key).value;
    return j;
  }

 private:
  struct Value {
    std::string value;
    ParamSource source;
  };
  std::string command_;
  std::vector<ParamSpec> specs_;
  std::map<std::string, Value> values_;
};

}  // namespace perclaw
