#pragma once

// Flat key=value configuration: one pair per line, '#' starts a comment.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dab {

class KeyValueConfig {
 public:
  /// Throws ConfigError with the line number on malformed lines.
  static KeyValueConfig parse(std::istream& in, const std::string& source = "config");
  static KeyValueConfig load(const std::string& path);

  /// Parses a "key=value" override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void erase(const std::string& key) { values_.erase(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list; empty entries are dropped.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  /// Throws ConfigError naming every key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;
  /// Throws ConfigError naming the first missing key.
  void require(const std::vector<std::string>& keys) const;

  /// Sorted key=value lines.
  void write(std::ostream& out) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::optional<std::string> raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace dab
