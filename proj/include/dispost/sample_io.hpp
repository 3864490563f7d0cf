#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "dispost/errors.hpp"
#include "dispost/sampler.hpp"

namespace dispost {

namespace detail {
inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(s);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != trim(s).size() && used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("cannot parse " + what + " '" + s + "'");
  }
}
}  // namespace detail

// key=value lines; '#' starts a comment.
inline std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("expected key=value, got '" + line + "'");
    out[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

// CSV `chain,iter,coord_0..coord_{p-1}` with one row per kept draw.
inline void write_samples_csv(const SampleSet& set, std::ostream& out) {
  out << "chain,iter";
  for (std::size_t j = 0; j < set.dim; ++j) out << ",coord_" << j;
  out << '\n';
  for (std::size_t c = 0; c < set.chains.size(); ++c) {
    for (std::size_t i = 0; i < set.draws_per_chain(); ++i) {
      out << c << ',' << i;
      for (double v : set.draw(c, i)) out << ',' << detail::format_double(v);
      out << '\n';
    }
  }
}

inline void write_samples_metadata(const SampleSet& set, std::ostream& out) {
  const auto& cfg = set.config;
  out << "family=" << set.family_id << '\n'
      << "dim=" << set.dim << '\n'
      << "seed=" << cfg.seed << '\n'
      << "n_chains=" << cfg.n_chains << '\n'
      << "burn_in=" << cfg.burn_in << '\n'
      << "thinning=" << cfg.thinning << '\n'
      << "n_keep=" << cfg.n_keep << '\n'
      << "kernel_width=" << detail::format_double(cfg.kernel_width) << '\n'
      << "adapt=" << (cfg.adapt ? "true" : "false") << '\n';
  for (std::size_t c = 0; c < set.chains.size(); ++c) {
    out << "acceptance_rate_" << c << '=' << detail::format_double(set.chains[c].acceptance_rate) << '\n';
    out << "final_width_" << c << '=' << detail::format_double(set.chains[c].final_width) << '\n';
  }
  double max_rhat = 0.0;
  for (double r : set.rhat) max_rhat = std::max(max_rhat, r);
  if (!set.rhat.empty()) out << "rhat_max=" << detail::format_double(max_rhat) << '\n';
  out << "rhat_flag=" << (set.rhat_flag ? "true" : "false") << '\n';
}

inline void write_sample_set(const SampleSet& set, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream csv(dir / "samples.csv");
  std::ofstream meta(dir / "samples.meta");
  if (!csv || !meta) throw IoError("cannot write sample set under " + dir.string());
  write_samples_csv(set, csv);
  write_samples_metadata(set, meta);
}

inline SampleSet read_sample_set(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "samples.meta");
  std::ifstream csv(dir / "samples.csv");
  if (!meta_in || !csv) throw IoError("cannot read sample set under " + dir.string());
  const auto meta = read_key_values(meta_in);
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("sample metadata missing '" + key + "'");
    return it->second;
  };
  SampleSet set;
  set.family_id = get("family");
  set.dim = std::stoul(get("dim"));
  set.config.seed = std::stoull(get("seed"));
  set.config.n_chains = std::stoul(get("n_chains"));
  set.config.burn_in = std::stoul(get("burn_in"));
  set.config.thinning = std::stoul(get("thinning"));
  set.config.n_keep = std::stoul(get("n_keep"));
  set.config.kernel_width = detail::parse_double(get("kernel_width"), "kernel_width");
  set.config.adapt = get("adapt") == "true";
  set.chains.resize(set.config.n_chains);
  for (std::size_t c = 0; c < set.chains.size(); ++c) {
    set.chains[c].acceptance_rate = detail::parse_double(get("acceptance_rate_" + std::to_string(c)), "acceptance");
    set.chains[c].final_width = detail::parse_double(get("final_width_" + std::to_string(c)), "width");
  }
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != set.dim + 2) throw IoError("samples.csv: wrong column count");
    const std::size_t chain = std::stoul(fields[0]);
    if (chain >= set.chains.size()) throw IoError("samples.csv: chain index out of range");
    for (std::size_t j = 0; j < set.dim; ++j) {
      set.chains[chain].draws.push_back(detail::parse_double(fields[j + 2], "coordinate"));
    }
  }
  set.rhat = split_rhat(set);
  set.rhat_flag = std::any_of(set.rhat.begin(), set.rhat.end(), [](double r) { return !(r <= kRhatThreshold); });
  return set;
}

}  // namespace dispost
