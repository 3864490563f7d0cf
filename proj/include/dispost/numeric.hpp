#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "dispost/errors.hpp"

namespace dispost {

using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// Reporting-boundary probability floor, e^-22.
inline constexpr double kLogProbabilityFloor = -22.0;

// Neumaier-compensated accumulator. Sums of many log densities are formed
// with this so that reordering the terms changes the result only at the
// level of a few ulps of the total.
class CompensatedSum {
 public:
  void add(double v) {
    if (std::isinf(v) || std::isinf(sum_)) {
      sum_ += v;
      return;
    }
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return std::isinf(sum_) ? sum_ : sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// log(sum(exp(values))) with a max shift. Returns -inf iff every entry is -inf.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw UsageError("log_sum_exp: empty input");
  double max = kNegInf;
  for (double v : values) {
    if (std::isnan(v)) throw UsageError("log_sum_exp: NaN input");
    max = std::max(max, v);
  }
  if (max == kNegInf || max == kPosInf) return max;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - max);
  return max + std::log(acc);
}

inline double log_sum_exp(double a, double b) {
  const double values[2] = {a, b};
  return log_sum_exp(values);
}

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Dirichlet log density of a point on the simplex.
inline double log_dirichlet_pdf(std::span<const double> p, std::span<const double> concentration) {
  if (p.size() != concentration.size()) throw UsageError("log_dirichlet_pdf: size mismatch");
  double total = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    total += concentration[k];
    out += (concentration[k] - 1.0) * std::log(p[k]) - std::lgamma(concentration[k]);
  }
  return out + std::lgamma(total);
}

inline void sample_dirichlet(std::span<const double> concentration, std::span<double> out, Rng& rng) {
  double total = 0.0;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    std::gamma_distribution<double> gamma(concentration[k], 1.0);
    out[k] = gamma(rng);
    total += out[k];
  }
  if (total <= 0.0) {
    // every gamma draw underflowed (tiny concentrations); fall back to a vertex
    std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
    std::fill(out.begin(), out.end(), 0.0);
    out[pick(rng)] = 1.0;
    return;
  }
  for (double& v : out) v /= total;
}

// Leave-one-out jackknife standard error of the mean of block values.
inline double jackknife_se(std::span<const double> blocks) {
  const std::size_t b = blocks.size();
  if (b < 2) throw UsageError("jackknife_se: need at least two blocks");
  double total = 0.0;
  for (double v : blocks) total += v;
  const double mean = total / static_cast<double>(b);
  double ss = 0.0;
  for (double v : blocks) {
    const double loo = (total - v) / static_cast<double>(b - 1);
    ss += (loo - mean) * (loo - mean);
  }
  return std::sqrt(static_cast<double>(b - 1) / static_cast<double>(b) * ss);
}

// Independent stream seed for (master, a, b, ...) via seed_seq mixing.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(master));
  words.push_back(static_cast<std::uint32_t>(master >> 32));
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace dispost
