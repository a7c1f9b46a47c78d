#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>

namespace evogood {

/// Flat `key = value` text configuration. `#` starts a comment; blank lines
/// are ignored; a repeated key is a parse error. Values keep their source
/// line so typed conversions can report where a malformed value came from.
class KvConfig {
 public:
  static KvConfig parse(std::istream& in);
  static KvConfig parse_string(const std::string& text);
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  /// Throws ConfigError naming the key when absent.
  const std::string& require(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  int require_int(const std::string& key) const;
  double require_double(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key) { values_.erase(key); lines_.erase(key); }
  /// Later values win; used for `--key value` overrides.
  void merge(const KvConfig& overrides);

  const std::map<std::string, std::string>& entries() const { return values_; }
  /// Keys present here but absent from `known`.
  std::set<std::string> unknown_keys(const std::set<std::string>& known) const;

  /// Canonical form: sorted `key = value` lines.
  void write(std::ostream& out) const;
  std::string to_string() const;
  /// 16 hex digits of a 64-bit FNV-1a hash over the canonical form.
  std::string hash() const;

 private:
  [[noreturn]] void bad_value(const std::string& key, const std::string& expected) const;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

std::string fnv1a_hex(const std::string& bytes);

}  // namespace evogood
