#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dispost/model.hpp"

namespace dispost {

struct LogisticRegressionSpec {
  std::size_t dim = 10;
  int classes = 2;
  double weight_bound = 30.0;  // uniform prior on [-B, B] per weight
  // Reference point for the intercept: scores are b_c + w_c . (x - center).
  // Empty means the origin.
  std::vector<double> center;
};

// Multinomial logistic regression, p(c | x) = softmax(b_c + w_c . (x - center)), with
// class C-1 as the reference (score pinned to 0). Parameters are laid out
// per non-reference class as [b_c, w_c1, ..., w_cD]. There is no model of
// x, so only conditional evaluations are defined.
class LogisticRegression final : public ModelFamily {
 public:
  explicit LogisticRegression(LogisticRegressionSpec spec) : spec_(spec) {
    if (spec_.classes < 2) throw UsageError("logreg: need at least two classes");
    if (!(spec_.weight_bound > 0.0)) throw UsageError("logreg: weight bound must be positive");
    if (spec_.center.empty()) spec_.center.assign(spec_.dim, 0.0);
    if (spec_.center.size() != spec_.dim) throw UsageError("logreg: center must have one entry per feature");
    layout_.add("weights", BlockKind::Real, static_cast<std::size_t>(spec_.classes - 1) * (spec_.dim + 1));
  }

  const LogisticRegressionSpec& spec() const { return spec_; }

  std::string id() const override { return "logreg"; }
  int num_classes() const override { return spec_.classes; }
  std::size_t feature_dim() const override { return spec_.dim; }
  const ParameterLayout& layout() const override { return layout_; }
  bool has_margin() const override { return false; }

  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    for (double w : theta) {
      if (std::abs(w) > spec_.weight_bound) return kNegInf;
    }
    return -static_cast<double>(theta.size()) * std::log(2.0 * spec_.weight_bound);
  }

  std::vector<double> sample_prior(Rng& rng) const override {
    std::uniform_real_distribution<double> uniform(-spec_.weight_bound, spec_.weight_bound);
    std::vector<double> theta(unconstrained_dim());
    for (double& v : theta) v = uniform(rng);
    return theta;
  }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    check_dim(theta);
    return std::make_unique<Bound>(spec_, std::vector<double>(theta.begin(), theta.end()));
  }

 private:
  class Bound final : public BoundModel {
   public:
    Bound(const LogisticRegressionSpec& spec, std::vector<double> weights)
        : BoundModel(spec.classes), dim_(spec.dim), center_(spec.center), weights_(std::move(weights)) {}

    double log_joint(int, FeatureView, Rng&) const override {
      throw ConfigurationError("logreg: no margin model; use the regression posterior");
    }

    void log_conditionals(FeatureView x, std::span<double> out, Rng&) const override {
      if (x.size() != dim_) throw UsageError("logreg: feature dimension mismatch");
      const std::size_t stride = dim_ + 1;
      for (std::size_t c = 0; c + 1 < out.size(); ++c) {
        const double* w = weights_.data() + c * stride;
        double score = w[0];
        for (std::size_t d = 0; d < dim_; ++d) {
          if (!x[d]) throw ConfigurationError("logreg: missing features must be imputed before regression");
          score += w[d + 1] * (*x[d] - center_[d]);
        }
        out[c] = score;
      }
      out.back() = 0.0;
      const double norm = log_sum_exp(out);
      for (double& v : out) v -= norm;
    }

   private:
    std::size_t dim_;
    std::vector<double> center_;
    std::vector<double> weights_;
  };

  LogisticRegressionSpec spec_;
  ParameterLayout layout_;
};

}  // namespace dispost
