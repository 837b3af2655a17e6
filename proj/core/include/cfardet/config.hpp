#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfardet {

// ============================================================================
// Flat key = value configuration text. Keys use dotted section prefixes
// ("train.alpha", "model.sigma_grid"); values are scalars or comma-separated
// lists. '#' lines are comments. Duplicate keys are an error — a config file
// is a versionable experiment document, and silent last-wins would hide
// edits. Unknown keys are rejected by the experiment layer against its
// allowed set.
// ============================================================================

class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const;

  // Typed getters; each throws std::invalid_argument naming the key when the
  // stored text does not parse as the requested type.
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key,
                           std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> fallback) const;
  std::vector<std::string> get_string_list(
      const std::string& key, std::vector<std::string> fallback) const;

  // Insert or overwrite (flag overrides, resolved-config assembly).
  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_uint64(const std::string& key, std::uint64_t value);

  // Throws listing every key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;

  // Canonical text: "key = value" lines sorted by key, one per line.
  std::string resolved() const;

  // FNV-1a 64-bit hash of the canonical text.
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::string> entries_;
};

std::uint64_t fnv1a64(std::string_view text);

// Seed precedence: command-line flag, then the config's "seed" key, then the
// CFARDET_SEED environment variable, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           const Config& config);

}  // namespace cfardet
