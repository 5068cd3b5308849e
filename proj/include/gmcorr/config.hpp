#pragma once

// Plain-text experiment configuration:
//
//   # comment
//   scenario = lmg-jump-sweep
//   n_spins  = [10, 25]
//   h        = linspace(-0.5, 2, 26)
//
// Every key may appear once. Values are scalars, bracketed lists or
// linspace(a, b, n). Keys that nothing reads are reported as errors.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gmcorr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_commas(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto c = s.find(',');
    out.emplace_back(trim(s.substr(0, c)));
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.starts_with('+')) s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

/// Shortest text that parses back to exactly `v`.
inline std::string shortest_repr(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace detail

class ConfigFile {
 public:
  struct Entry {
    std::vector<std::string> values;
    bool is_list = false;
    int line = 0;
    mutable bool used = false;
  };

  static ConfigFile parse(std::string_view text, std::string origin = "<string>") {
    ConfigFile cfg;
    cfg.origin_ = std::move(origin);
    int line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = raw;
      if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) cfg.fail(line_no, "expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      const std::string_view value = detail::trim(line.substr(eq + 1));
      if (key.empty() || key.find_first_of(" \t") != std::string::npos) cfg.fail(line_no, "malformed key");
      if (value.empty()) cfg.fail(line_no, "missing value for '" + key + "'");
      if (cfg.entries_.count(key)) cfg.fail(line_no, "duplicate key '" + key + "'");
      cfg.entries_[key] = cfg.parse_value(value, line_no);
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  /// Inserts or replaces a scalar, e.g. from a command-line override.
  void set(const std::string& key, std::string value) { entries_[key] = Entry{{std::move(value)}, false, 0}; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    return scalar(key, *e);
  }

  double get_double(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    return to_double(key, scalar(key, *e), e->line);
  }

  long long get_int(const std::string& key, long long fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    return to_int(key, scalar(key, *e), e->line);
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    const std::string s = scalar(key, *e);
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      fail(e->line, "'" + key + "' must be a non-negative 64-bit integer, got '" + s + "'");
    return v;
  }

  /// Scalars are accepted as one-element lists.
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::vector<double> out;
    for (const auto& s : e->values) out.push_back(to_double(key, s, e->line));
    if (out.empty()) fail(e->line, "'" + key + "' must not be an empty list");
    return out;
  }

  std::vector<long long> get_ints(const std::string& key, std::vector<long long> fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::vector<long long> out;
    for (const auto& s : e->values) out.push_back(to_int(key, s, e->line));
    if (out.empty()) fail(e->line, "'" + key + "' must not be an empty list");
    return out;
  }

  /// Keys present in the file that no accessor has read.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_)
      if (!e.used) out.push_back(k);
    return out;
  }

  void reject_unused(const std::string& context) const {
    for (const auto& [k, e] : entries_)
      if (!e.used) fail(e.line, "unknown key '" + k + "' for " + context);
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  }

 private:
  const Entry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  std::string scalar(const std::string& key, const Entry& e) const {
    if (e.is_list || e.values.size() != 1) fail(e.line, "'" + key + "' expects a single value");
    return e.values.front();
  }

  double to_double(const std::string& key, const std::string& s, int line) const {
    double v = 0.0;
    if (!detail::parse_double(s, v) || !std::isfinite(v))
      fail(line, "'" + key + "' expects a finite number, got '" + s + "'");
    return v;
  }

  long long to_int(const std::string& key, const std::string& s, int line) const {
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      fail(line, "'" + key + "' expects an integer, got '" + s + "'");
    return v;
  }

  Entry parse_value(std::string_view value, int line) const {
    Entry e;
    e.line = line;
    if (value.front() == '[') {
      if (value.back() != ']') fail(line, "unterminated list");
      e.is_list = true;
      const auto inner = detail::trim(value.substr(1, value.size() - 2));
      if (!inner.empty()) e.values = detail::split_commas(inner);
      for (const auto& v : e.values)
        if (v.empty()) fail(line, "empty list element");
      return e;
    }
    if (value.starts_with("linspace(")) {
      if (value.back() != ')') fail(line, "unterminated linspace(...)");
      const auto args = detail::split_commas(value.substr(9, value.size() - 10));
      double a = 0, b = 0, n = 0;
      if (args.size() != 3 || !detail::parse_double(args[0], a) || !detail::parse_double(args[1], b) ||
          !detail::parse_double(args[2], n) || n < 1 || n != std::floor(n))
        fail(line, "linspace expects (start, stop, count)");
      e.is_list = true;
      const int count = static_cast<int>(n);
      for (int i = 0; i < count; ++i) {
        const double x = count == 1 ? a : a + (b - a) * i / (count - 1);
        e.values.push_back(detail::shortest_repr(x));
      }
      return e;
    }
    e.values.emplace_back(value);
    return e;
  }

  std::map<std::string, Entry> entries_;
  std::string origin_;
};

}  // namespace gmcorr
