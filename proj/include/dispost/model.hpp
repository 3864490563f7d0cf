#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dispost/errors.hpp"
#include "dispost/numeric.hpp"
#include "dispost/transforms.hpp"

namespace dispost {

// One feature component: a finite value, or missing (std::nullopt).
using Feature = std::optional<double>;
using FeatureView = std::span<const Feature>;

struct Observation {
  int label = 0;
  std::vector<Feature> features;

  bool has_missing() const {
    for (const auto& f : features) {
      if (!f) return true;
    }
    return false;
  }
};

struct Dataset {
  std::vector<Observation> observations;
  int num_classes = 1;
  std::size_t feature_dim = 0;

  Dataset() = default;
  Dataset(int classes, std::size_t dim) : num_classes(classes), feature_dim(dim) {}

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }

  void add(int label, std::vector<Feature> features) {
    observations.push_back({label, std::move(features)});
  }

  bool has_missing() const {
    for (const auto& obs : observations) {
      if (obs.has_missing()) return true;
    }
    return false;
  }

  // Throws UsageError on the first observation that breaks the class/dimension contract.
  void validate() const {
    if (num_classes < 1) throw UsageError("dataset: num_classes must be positive");
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const auto& obs = observations[i];
      if (obs.label < 0 || obs.label >= num_classes) {
        throw UsageError("dataset: observation " + std::to_string(i) + " has label outside [0, C)");
      }
      if (obs.features.size() != feature_dim) {
        throw UsageError("dataset: observation " + std::to_string(i) + " has wrong feature dimension");
      }
      for (const auto& f : obs.features) {
        if (f && !std::isfinite(*f)) {
          throw UsageError("dataset: observation " + std::to_string(i) + " has a non-finite feature");
        }
      }
    }
  }
};

inline std::vector<Feature> observed(std::span<const double> x) {
  return {x.begin(), x.end()};
}

struct ParameterPoint {
  std::vector<double> values;
  std::string family_id;
};

// A model family evaluated at one fixed parameter point. Created by
// ModelFamily::bind so that per-theta work (transforms, logs of simplex
// entries) is done once per point rather than once per observation.
class BoundModel {
 public:
  virtual ~BoundModel() = default;

  // False when theta lies outside the family's support (the density is zero
  // everywhere), e.g. an implied standard deviation below the floor.
  virtual bool in_support() const { return true; }

  // log p(c, x | theta) with latent variables marginalized. Missing
  // components are marginalized out when the family supports it.
  virtual double log_joint(int c, FeatureView x, Rng& rng) const = 0;

  virtual void class_log_joints(FeatureView x, std::span<double> out, Rng& rng) const {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = log_joint(static_cast<int>(c), x, rng);
  }

  // log p(c | x, theta) for every class. Yields NaN-free output or throws
  // EvaluationError when the margin is zero.
  virtual void log_conditionals(FeatureView x, std::span<double> out, Rng& rng) const {
    class_log_joints(x, out, rng);
    const double margin = log_sum_exp(out);
    if (margin == kNegInf) throw EvaluationError("conditional undefined: log margin is -inf");
    for (double& v : out) v -= margin;
  }

  virtual double log_conditional(int c, FeatureView x, Rng& rng) const {
    std::vector<double> buf(num_classes_);
    log_conditionals(x, buf, rng);
    return buf[c];
  }

  // Fill every missing component of x with a draw from q(x_miss | c, x_obs, theta).
  virtual void impute(int /*c*/, std::span<Feature> /*x*/, Rng& /*rng*/) const {
    throw ConfigurationError("family cannot simulate missing components");
  }

 protected:
  explicit BoundModel(int num_classes) : num_classes_(num_classes) {}
  int num_classes_;
};

class ModelFamily {
 public:
  virtual ~ModelFamily() = default;

  virtual std::string id() const = 0;
  virtual int num_classes() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual const ParameterLayout& layout() const = 0;

  std::size_t unconstrained_dim() const { return layout().unconstrained_dim(); }

  // log p(theta) over the unconstrained coordinates (Jacobians included).
  virtual double log_prior(std::span<const double> theta) const = 0;

  virtual std::unique_ptr<BoundModel> bind(std::span<const double> theta) const = 0;

  // False for conditional-only families (regression).
  virtual bool has_margin() const { return true; }
  virtual bool supports_missing() const { return false; }
  // True when BoundModel::impute can draw missing components given (c, x_obs).
  virtual bool can_impute() const { return false; }

  virtual std::vector<double> sample_prior(Rng& rng) const = 0;

  virtual Dataset simulate(std::span<const double> /*theta*/, std::size_t /*n*/, Rng& /*rng*/) const {
    throw ConfigurationError(id() + ": family cannot simulate data");
  }

  // Every feature vector with positive probability, for families with finite
  // discrete support; nullopt otherwise.
  virtual std::optional<std::vector<std::vector<Feature>>> discrete_support() const { return std::nullopt; }

 protected:
  void check_dim(std::span<const double> theta) const {
    if (theta.size() != unconstrained_dim()) {
      throw UsageError(id() + ": parameter dimension " + std::to_string(theta.size()) + " != " +
                       std::to_string(unconstrained_dim()));
    }
  }
};

inline ConstrainedParameters to_constrained(const ModelFamily& model, std::span<const double> theta) {
  return to_constrained(model.layout(), theta);
}

namespace detail {
inline Rng& scratch_rng() {
  thread_local Rng rng(0x5eedULL);
  return rng;
}
}  // namespace detail

// log p(x | theta) = log sum_c p(c, x | theta).
inline double log_margin(const ModelFamily& model, FeatureView x, std::span<const double> theta,
                         Rng* rng = nullptr) {
  if (!model.has_margin()) throw ConfigurationError(model.id() + ": no margin model");
  auto bound = model.bind(theta);
  std::vector<double> joints(model.num_classes());
  bound->class_log_joints(x, joints, rng ? *rng : detail::scratch_rng());
  return log_sum_exp(joints);
}

// log p(c | x, theta). Throws EvaluationError when the margin is zero.
inline double log_conditional(const ModelFamily& model, int c, FeatureView x, std::span<const double> theta,
                              Rng* rng = nullptr) {
  if (c < 0 || c >= model.num_classes()) throw UsageError("log_conditional: class out of range");
  auto bound = model.bind(theta);
  return bound->log_conditional(c, x, rng ? *rng : detail::scratch_rng());
}

inline double log_joint(const ModelFamily& model, int c, FeatureView x, std::span<const double> theta,
                        Rng* rng = nullptr) {
  if (c < 0 || c >= model.num_classes()) throw UsageError("log_joint: class out of range");
  auto bound = model.bind(theta);
  return bound->log_joint(c, x, rng ? *rng : detail::scratch_rng());
}

// The class-only model p^x(c | theta) = p(c | x, theta) induced by a
// generative family at one fixed feature vector x.
class InducedClassFamily final : public ModelFamily {
 public:
  InducedClassFamily(const ModelFamily& base, std::vector<Feature> x) : base_(base), x_(std::move(x)) {}

  std::string id() const override { return "induced(" + base_.id() + ")"; }
  int num_classes() const override { return base_.num_classes(); }
  std::size_t feature_dim() const override { return 0; }
  const ParameterLayout& layout() const override { return base_.layout(); }
  double log_prior(std::span<const double> theta) const override { return base_.log_prior(theta); }
  std::vector<double> sample_prior(Rng& rng) const override { return base_.sample_prior(rng); }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    return std::make_unique<Bound>(base_.bind(theta), x_, num_classes());
  }

 private:
  class Bound final : public BoundModel {
   public:
    Bound(std::unique_ptr<BoundModel> inner, const std::vector<Feature>& x, int classes)
        : BoundModel(classes), inner_(std::move(inner)), x_(x) {}
    bool in_support() const override { return inner_->in_support(); }
    double log_joint(int c, FeatureView, Rng& rng) const override { return inner_->log_conditional(c, x_, rng); }

   private:
    std::unique_ptr<BoundModel> inner_;
    const std::vector<Feature>& x_;
  };

  const ModelFamily& base_;
  std::vector<Feature> x_;
};

}  // namespace dispost
