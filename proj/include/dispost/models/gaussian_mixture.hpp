#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dispost/model.hpp"

namespace dispost {

namespace detail {
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

// Two-class diagonal Gaussian mixture with equal weights evaluated at fixed
// means and standard deviations; missing components are dropped, which is
// the exact marginal for a diagonal covariance.
class DiagonalMixtureBound final : public BoundModel {
 public:
  DiagonalMixtureBound(std::size_t dim, std::vector<double> means, std::vector<double> sds, bool valid)
      : BoundModel(2), dim_(dim), means_(std::move(means)), sds_(std::move(sds)), valid_(valid) {
    log_sd_.resize(sds_.size());
    inv_var_.resize(sds_.size());
    for (std::size_t i = 0; i < sds_.size(); ++i) {
      log_sd_[i] = std::log(sds_[i]);
      inv_var_[i] = 1.0 / (sds_[i] * sds_[i]);
    }
  }

  bool in_support() const override { return valid_; }

  double log_joint(int c, FeatureView x, Rng&) const override {
    if (x.size() != dim_) throw UsageError("gaussian mixture: feature dimension mismatch");
    if (!valid_) return kNegInf;
    const std::size_t base = static_cast<std::size_t>(c) * dim_;
    double out = -std::numbers::ln2;
    for (std::size_t d = 0; d < dim_; ++d) {
      if (!x[d]) continue;
      const double diff = *x[d] - means_[base + d];
      out -= kHalfLog2Pi + log_sd_[base + d] + 0.5 * diff * diff * inv_var_[base + d];
    }
    return out;
  }

  void impute(int c, std::span<Feature> x, Rng& rng) const override {
    const std::size_t base = static_cast<std::size_t>(c) * dim_;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 0; d < dim_; ++d) {
      if (!x[d]) x[d] = means_[base + d] + sds_[base + d] * normal(rng);
    }
  }

  Dataset simulate(std::size_t n, Rng& rng) const {
    Dataset out(2, dim_);
    out.observations.reserve(n);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = coin(rng) ? 1 : 0;
      std::vector<Feature> x(dim_);
      impute(c, x, rng);
      out.add(c, std::move(x));
    }
    return out;
  }

 private:
  std::size_t dim_;
  std::vector<double> means_;
  std::vector<double> sds_;
  std::vector<double> log_sd_;
  std::vector<double> inv_var_;
  bool valid_;
};
}  // namespace detail

struct ConstrainedGaussianMixtureSpec {
  std::size_t dim = 10;
  double slope = 0.0;  // k in sigma = k * mu + 2
  double prior_mean = 7.0;
  double prior_sd = 7.0;
  double sigma_min = 1e-6;
};

// Two-component diagonal Gaussian mixture whose per-dimension standard
// deviation is tied to the mean, sigma = k * mu + 2. Mixing weights are
// fixed at 1/2 and the class label is the component. Parameters are the
// 2*D means, class-major.
class ConstrainedGaussianMixture final : public ModelFamily {
 public:
  explicit ConstrainedGaussianMixture(ConstrainedGaussianMixtureSpec spec) : spec_(spec) {
    if (spec_.slope < 0.0) throw UsageError("cgm: slope k must be >= 0");
    if (!(spec_.prior_sd > 0.0)) throw UsageError("cgm: prior sd must be positive");
    if (spec_.dim == 0) throw UsageError("cgm: dimension must be positive");
    layout_.add("mu", BlockKind::Real, 2 * spec_.dim);
  }

  const ConstrainedGaussianMixtureSpec& spec() const { return spec_; }

  std::string id() const override { return "cgm"; }
  int num_classes() const override { return 2; }
  std::size_t feature_dim() const override { return spec_.dim; }
  const ParameterLayout& layout() const override { return layout_; }
  bool supports_missing() const override { return true; }
  bool can_impute() const override { return true; }

  double sigma(double mu) const { return spec_.slope * mu + 2.0; }

  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    double out = 0.0;
    for (double mu : theta) out += log_normal_pdf(mu, spec_.prior_mean, spec_.prior_sd);
    return out;
  }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override { return bind_mixture(theta); }

  std::unique_ptr<detail::DiagonalMixtureBound> bind_mixture(std::span<const double> theta) const {
    check_dim(theta);
    std::vector<double> sds(theta.size());
    bool valid = true;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      sds[i] = sigma(theta[i]);
      if (!(sds[i] > spec_.sigma_min)) {
        valid = false;
        sds[i] = 1.0;  // placeholder; the bound model reports -inf everywhere
      }
    }
    return std::make_unique<detail::DiagonalMixtureBound>(spec_.dim, std::vector<double>(theta.begin(), theta.end()),
                                                          std::move(sds), valid);
  }

  // Draws from the prior restricted to the support (sigma(mu) > sigma_min in
  // every coordinate), which is the normalized prior of this family. The
  // restriction factorizes, so each coordinate is redrawn on its own.
  std::vector<double> sample_prior(Rng& rng) const override {
    std::normal_distribution<double> normal(spec_.prior_mean, spec_.prior_sd);
    std::vector<double> theta(unconstrained_dim());
    for (double& v : theta) {
      v = normal(rng);
      for (int attempt = 0; !(sigma(v) > spec_.sigma_min); ++attempt) {
        if (attempt == 10000) throw InitializationError("cgm: prior has almost no mass inside the support");
        v = normal(rng);
      }
    }
    return theta;
  }

  Dataset simulate(std::span<const double> theta, std::size_t n, Rng& rng) const override {
    auto bound = bind_mixture(theta);
    if (!bound->in_support()) throw UsageError("cgm: cannot simulate from a parameter outside the support");
    return bound->simulate(n, rng);
  }

 private:
  ConstrainedGaussianMixtureSpec spec_;
  ParameterLayout layout_;
};

struct TrueToySpec {
  std::size_t informative_dims = 2;
  std::size_t noise_dims = 8;
  double class0_mean = 5.0;  // informative dims, first generating component
  double class1_mean = 9.0;  // informative dims, second generating component
  double informative_sd = 2.0;
  double noise_mean = 9.0;
  double noise_sd = 2.0;
};

// Fixed data-generating mixture of the toy study. It has no free parameters;
// bind() takes an empty parameter vector.
class TrueToyModel final : public ModelFamily {
 public:
  explicit TrueToyModel(TrueToySpec spec = {}) : spec_(spec) {
    const std::size_t dim = feature_dim();
    means_.resize(2 * dim);
    sds_.resize(2 * dim);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t d = 0; d < dim; ++d) {
        const bool informative = d < spec_.informative_dims;
        means_[c * dim + d] = informative ? (c == 0 ? spec_.class0_mean : spec_.class1_mean) : spec_.noise_mean;
        sds_[c * dim + d] = informative ? spec_.informative_sd : spec_.noise_sd;
      }
    }
  }

  const TrueToySpec& spec() const { return spec_; }

  std::string id() const override { return "toy-truth"; }
  int num_classes() const override { return 2; }
  std::size_t feature_dim() const override { return spec_.informative_dims + spec_.noise_dims; }
  const ParameterLayout& layout() const override { return layout_; }
  bool supports_missing() const override { return true; }
  bool can_impute() const override { return true; }
  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    return 0.0;
  }
  std::vector<double> sample_prior(Rng&) const override { return {}; }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    check_dim(theta);
    return std::make_unique<detail::DiagonalMixtureBound>(feature_dim(), means_, sds_, true);
  }

  Dataset simulate(std::span<const double> theta, std::size_t n, Rng& rng) const override {
    check_dim(theta);
    return detail::DiagonalMixtureBound(feature_dim(), means_, sds_, true).simulate(n, rng);
  }

 private:
  TrueToySpec spec_;
  ParameterLayout layout_;
  std::vector<double> means_;
  std::vector<double> sds_;
};

inline Dataset simulate_toy(const TrueToyModel& truth, std::size_t n, Rng& rng) {
  if (n == 0) throw UsageError("simulate_toy: n must be >= 1");
  return truth.simulate({}, n, rng);
}

}  // namespace dispost
