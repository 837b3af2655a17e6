#include "cfardet/config.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfardet {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' is not a number: '" + value + "'");
  }
  if (used != value.size())
    throw std::invalid_argument("config: key '" + key +
                                "' has trailing text: '" + value + "'");
  return v;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " has no '=': '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " has an empty key");
    if (config.entries_.count(key) != 0)
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    config.entries_[key] = value;
  }
  return config;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool Config::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return parse_double(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(it->second, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' is not an integer: '" + it->second + "'");
  }
  if (used != it->second.size())
    throw std::invalid_argument("config: key '" + key +
                                "' has trailing text: '" + it->second + "'");
  if (v < INT_MIN || v > INT_MAX)
    throw std::invalid_argument("config: key '" + key + "' out of int range");
  return static_cast<int>(v);
}

std::uint64_t Config::get_uint64(const std::string& key,
                                 std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(it->second, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' is not an unsigned integer: '" +
                                it->second + "'");
  }
  if (used != it->second.size())
    throw std::invalid_argument("config: key '" + key +
                                "' has trailing text: '" + it->second + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::invalid_argument("config: key '" + key +
                              "' is not a bool: '" + it->second + "'");
}

std::vector<double> Config::get_double_list(
    const std::string& key, std::vector<double> fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second))
    out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::string> Config::get_string_list(
    const std::string& key, std::vector<std::string> fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return split_list(it->second);
}

void Config::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::invalid_argument("config: empty key");
  entries_[key] = value;
}

void Config::set_double(const std::string& key, double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  set(key, buf);
}

void Config::set_uint64(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

void Config::require_known(const std::vector<std::string>& allowed) const {
  std::string offenders;
  for (const auto& [key, value] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      if (!offenders.empty()) offenders += ", ";
      offenders += "'" + key + "'";
    }
  }
  if (!offenders.empty())
    throw std::invalid_argument("config: unknown keys: " + offenders);
}

std::string Config::resolved() const {
  std::string out;
  for (const auto& [key, value] : entries_)
    out += key + " = " + value + "\n";
  return out;
}

std::uint64_t Config::hash() const { return fnv1a64(resolved()); }

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           const Config& config) {
  if (flag_seed.has_value()) return *flag_seed;
  if (config.has("seed")) return config.get_uint64("seed", 0);
  if (const char* env = std::getenv("CFARDET_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument("CFARDET_SEED is not an unsigned integer");
    }
  }
  return 0;
}

}  // namespace cfardet
