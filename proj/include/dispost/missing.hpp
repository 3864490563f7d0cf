#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dispost/model.hpp"
#include "dispost/sampler.hpp"

namespace dispost {

// Per-component probability of a feature being missing at random. A single
// rate applies to every component.
struct MissingnessSpec {
  std::vector<double> rates{0.0};

  double rate(std::size_t k) const { return rates.size() == 1 ? rates.front() : rates.at(k); }

  void validate(std::size_t dim) const {
    if (rates.empty()) throw UsageError("missingness: no rates given");
    if (rates.size() != 1 && rates.size() != dim) throw UsageError("missingness: need one rate or one per component");
    for (double r : rates) {
      if (!(r >= 0.0 && r < 1.0)) throw UsageError("missingness: rates must lie in [0, 1)");
    }
  }
};

// Each feature component independently replaced by the missing marker with
// probability rate(k). Labels are never masked.
inline Dataset mask_at_random(const Dataset& data, const MissingnessSpec& spec, Rng& rng) {
  spec.validate(data.feature_dim);
  Dataset out = data;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (auto& obs : out.observations) {
    for (std::size_t k = 0; k < obs.features.size(); ++k) {
      const double u = uniform(rng);
      if (u < spec.rate(k)) obs.features[k].reset();
    }
  }
  return out;
}

// log q(c | x_obs, theta): missing dimensions are marginalized out of both
// the class joint and the margin.
inline double log_conditional_missing(const ModelFamily& model, const Observation& obs, std::span<const double> theta,
                                      Rng* rng = nullptr) {
  if (obs.has_missing() && !model.supports_missing()) {
    throw ConfigurationError(model.id() + ": cannot marginalize missing features");
  }
  return log_conditional(model, obs.label, obs.features, theta, rng);
}

// The model family that also generates the missing-data pattern:
//   p(c, x | theta) = prod_k (1 - lambda_k)^[x_k observed] lambda_k^[x_k missing] * q(c, x_obs | theta')
// with the rates lambda held fixed. Parameters are those of q.
class MissingAugmentedFamily final : public ModelFamily {
 public:
  MissingAugmentedFamily(const ModelFamily& base, MissingnessSpec spec) : base_(base), spec_(std::move(spec)) {
    spec_.validate(base_.feature_dim());
    if (!base_.supports_missing()) throw ConfigurationError(base_.id() + ": cannot marginalize missing features");
  }

  std::string id() const override { return "missing-augmented(" + base_.id() + ")"; }
  int num_classes() const override { return base_.num_classes(); }
  std::size_t feature_dim() const override { return base_.feature_dim(); }
  const ParameterLayout& layout() const override { return base_.layout(); }
  bool supports_missing() const override { return true; }
  double log_prior(std::span<const double> theta) const override { return base_.log_prior(theta); }
  std::vector<double> sample_prior(Rng& rng) const override { return base_.sample_prior(rng); }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    return std::make_unique<Bound>(base_.bind(theta), spec_, num_classes());
  }

 private:
  class Bound final : public BoundModel {
   public:
    Bound(std::unique_ptr<BoundModel> inner, const MissingnessSpec& spec, int classes)
        : BoundModel(classes), inner_(std::move(inner)), spec_(spec) {}

    bool in_support() const override { return inner_->in_support(); }

    double log_joint(int c, FeatureView x, Rng& rng) const override {
      return pattern_term(x) + inner_->log_joint(c, x, rng);
    }

    void class_log_joints(FeatureView x, std::span<double> out, Rng& rng) const override {
      inner_->class_log_joints(x, out, rng);
      const double pattern = pattern_term(x);
      for (double& v : out) v += pattern;
    }

   private:
    double pattern_term(FeatureView x) const {
      double out = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) out += x[k] ? std::log1p(-spec_.rate(k)) : std::log(spec_.rate(k));
      return out;
    }

    std::unique_ptr<BoundModel> inner_;
    const MissingnessSpec& spec_;
  };

  const ModelFamily& base_;
  MissingnessSpec spec_;
};

struct IgnorabilityReport {
  std::size_t grid_points = 0;
  // max_i |(f_a - f_b)(theta_i) - mean_i (f_a - f_b)| for each posterior kind
  double discriminative_deviation = 0.0;
  double joint_deviation = 0.0;
  // mean offset f_a - f_b
  double discriminative_offset = 0.0;
  double joint_offset = 0.0;
};

namespace detail {
inline void deviation_from_constant(const std::vector<double>& diff, double& deviation, double& offset) {
  double total = 0.0;
  for (double d : diff) total += d;
  offset = diff.empty() ? 0.0 : total / static_cast<double>(diff.size());
  deviation = 0.0;
  for (double d : diff) deviation = std::max(deviation, std::abs(d - offset));
}
}  // namespace detail

// Evaluates the augmented-family targets at two missingness rates over a grid
// of parameter points. Under ignorability both differences are constant in theta.
inline IgnorabilityReport verify_lambda_ignorability(const ModelFamily& model, const Dataset& data,
                                                     const std::vector<std::vector<double>>& grid, double lambda_a,
                                                     double lambda_b) {
  const MissingAugmentedFamily family_a(model, MissingnessSpec{{lambda_a}});
  const MissingAugmentedFamily family_b(model, MissingnessSpec{{lambda_b}});
  IgnorabilityReport report;
  report.grid_points = grid.size();
  std::vector<double> disc_diff;
  std::vector<double> joint_diff;
  for (const auto& theta : grid) {
    for (PosteriorKind kind : {PosteriorKind::Discriminative, PosteriorKind::Joint}) {
      const double fa = PosteriorTarget(kind, family_a, data).log_density(theta, detail::scratch_rng());
      const double fb = PosteriorTarget(kind, family_b, data).log_density(theta, detail::scratch_rng());
      (kind == PosteriorKind::Joint ? joint_diff : disc_diff).push_back(fa - fb);
    }
  }
  detail::deviation_from_constant(disc_diff, report.discriminative_deviation, report.discriminative_offset);
  detail::deviation_from_constant(joint_diff, report.joint_deviation, report.joint_offset);
  return report;
}

struct ImputationSet {
  std::vector<Dataset> datasets;
  std::string provenance;
};

// Completes every missing component by drawing from q(x_miss | c, x_obs, theta)
// with theta drawn from `draws` (one draw per imputation). Observed entries are
// copied unchanged. Imputation m uses the stream derive_seed(seed, m).
inline ImputationSet impute_for_regression(const Dataset& data, const ModelFamily& generator,
                                           const std::vector<std::vector<double>>& draws, std::size_t n_imputations,
                                           std::uint64_t seed) {
  if (draws.empty()) throw UsageError("impute_for_regression: no parameter draws");
  if (data.has_missing() && !generator.can_impute()) {
    throw ConfigurationError(generator.id() + ": cannot simulate missing components");
  }
  ImputationSet out;
  out.provenance = "generator=" + generator.id() + " draws=" + std::to_string(draws.size());
  for (std::size_t m = 0; m < n_imputations; ++m) {
    Rng rng(derive_seed(seed, {m}));
    std::uniform_int_distribution<std::size_t> pick(0, draws.size() - 1);
    auto bound = generator.bind(draws[pick(rng)]);
    Dataset completed = data;
    for (auto& obs : completed.observations) {
      if (obs.has_missing()) bound->impute(obs.label, obs.features, rng);
    }
    out.datasets.push_back(std::move(completed));
  }
  return out;
}

inline ImputationSet impute_for_regression(const Dataset& data, const ModelFamily& generator,
                                           const ParameterPoint& theta, std::size_t n_imputations, std::uint64_t seed) {
  return impute_for_regression(data, generator, std::vector<std::vector<double>>{theta.values}, n_imputations, seed);
}

inline ImputationSet impute_for_regression(const Dataset& data, const ModelFamily& generator, const SampleSet& source,
                                           std::size_t n_imputations, std::uint64_t seed) {
  return impute_for_regression(data, generator, source.pooled(), n_imputations, seed);
}

}  // namespace dispost
