#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dispost/errors.hpp"
#include "dispost/sample_io.hpp"
#include "dispost/sampler.hpp"

namespace dispost::harness {

// Flat key=value configuration. Lists are comma separated. Every key must be
// consumed by the reader; leftovers are reported as usage errors so typos do
// not silently fall back to defaults.
class Config {
 public:
  Config() = default;
  explicit Config(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  static Config parse(std::istream& in) { return Config(dispost::read_key_values(in)); }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return dispost::detail::parse_double(get_string(key, ""), key);
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return parse_uint(get_string(key, ""), key);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw UsageError("config: " + key + " expects a boolean, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::string> out;
    for (const auto& item : dispost::detail::split(get_string(key, ""), ',')) {
      const auto t = dispost::detail::trim(item);
      if (!t.empty()) out.push_back(t);
    }
    if (out.empty()) throw UsageError("config: " + key + " must not be empty");
    return out;
  }

  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& s : get_list(key, {})) out.push_back(dispost::detail::parse_double(s, key));
    return out;
  }

  std::vector<std::size_t> get_size_list(const std::string& key, const std::vector<std::size_t>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    for (const auto& s : get_list(key, {})) out.push_back(parse_uint(s, key));
    return out;
  }

  // Throws on keys that were never read.
  void check_all_used() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw UsageError("config: unknown key '" + key + "'");
    }
  }

  static std::uint64_t parse_uint(const std::string& s, const std::string& key) {
    const auto t = dispost::detail::trim(s);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("config: " + key + " expects a non-negative integer, got '" + s + "'");
    }
    return std::stoull(t);
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// DISPOST_SEED, when set, replaces the configured master seed.
inline std::uint64_t master_seed(const Config& config, std::uint64_t fallback) {
  std::uint64_t seed = config.get_uint("seed", fallback);
  if (const char* env = std::getenv("DISPOST_SEED"); env && *env) seed = Config::parse_uint(env, "DISPOST_SEED");
  return seed;
}

// Reads chain settings under a key prefix, e.g. "chain." or "reg.".
inline ChainConfig read_chain_config(const Config& config, const std::string& prefix, ChainConfig base) {
  base.n_chains = config.get_uint(prefix + "chains", base.n_chains);
  base.burn_in = config.get_uint(prefix + "burn_in", base.burn_in);
  base.thinning = config.get_uint(prefix + "thinning", base.thinning);
  base.n_keep = config.get_uint(prefix + "n_keep", base.n_keep);
  base.kernel_width = config.get_double(prefix + "kernel_width", base.kernel_width);
  base.adapt = config.get_bool(prefix + "adapt", base.adapt);
  base.validate();
  return base;
}

}  // namespace dispost::harness
