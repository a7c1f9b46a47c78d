#include "evogood/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "evogood/errors.hpp"

namespace evogood {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::parse(std::istream& in) {
  KvConfig cfg;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected `key = value`, got `" + text + "`");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "empty key");
    if (key.find_first_of(" \t") != std::string::npos) throw ParseError(line, "key contains whitespace: `" + key + "`");
    if (cfg.values_.count(key)) throw ParseError(line, "duplicate key `" + key + "`");
    cfg.values_[key] = value;
    cfg.lines_[key] = line;
  }
  return cfg;
}

KvConfig KvConfig::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in);
}

const std::string& KvConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key `" + key + "`");
  return it->second;
}

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

void KvConfig::bad_value(const std::string& key, const std::string& expected) const {
  const std::string msg = "key `" + key + "`: expected " + expected + ", got `" + values_.at(key) + "`";
  auto it = lines_.find(key);
  if (it != lines_.end()) throw ParseError(it->second, msg);
  throw ConfigError(msg);
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, "an integer");
  return v;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, "a non-negative integer");
  return v;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, "a number");
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, "a boolean");
}

int KvConfig::require_int(const std::string& key) const {
  require(key);
  return get_int(key, 0);
}

double KvConfig::require_double(const std::string& key) const {
  require(key);
  return get_double(key, 0.0);
}

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  lines_.erase(key);
}

void KvConfig::merge(const KvConfig& overrides) {
  for (const auto& [k, v] : overrides.values_) {
    values_[k] = v;
    auto it = overrides.lines_.find(k);
    if (it != overrides.lines_.end()) lines_[k] = it->second;
    else lines_.erase(k);
  }
}

std::set<std::string> KvConfig::unknown_keys(const std::set<std::string>& known) const {
  std::set<std::string> out;
  for (const auto& [k, v] : values_)
    if (!known.count(k)) out.insert(k);
  return out;
}

void KvConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

std::string KvConfig::to_string() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

std::string KvConfig::hash() const { return fnv1a_hex(to_string()); }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace evogood
