#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dispost/model.hpp"

namespace dispost {

namespace detail {
inline std::size_t category_index(double v, std::size_t values) {
  if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(values)) {
    throw UsageError("discrete family: feature value outside {0, ..., V-1}");
  }
  return static_cast<std::size_t>(v);
}

inline std::vector<std::vector<Feature>> all_categorical_vectors(std::size_t dim, std::size_t values) {
  std::vector<std::vector<Feature>> out;
  std::vector<Feature> x(dim, 0.0);
  while (true) {
    out.push_back(x);
    std::size_t d = 0;
    for (; d < dim; ++d) {
      *x[d] += 1.0;
      if (*x[d] < static_cast<double>(values)) break;
      x[d] = 0.0;
    }
    if (d == dim) break;
  }
  return out;
}
}  // namespace detail

struct DiscreteNaiveBayesSpec {
  int classes = 2;
  std::size_t features = 1;
  std::size_t values = 3;
  double concentration = 1.0;  // symmetric Dirichlet on every simplex block
};

// Naive Bayes over categorical features: p(c, x) = pi(c) prod_d phi_{c,d}(x_d).
// Finite support, so every expectation over x can be enumerated exactly.
class DiscreteNaiveBayes final : public ModelFamily {
 public:
  explicit DiscreteNaiveBayes(DiscreteNaiveBayesSpec spec) : spec_(spec) {
    if (spec_.classes < 1 || spec_.features < 1 || spec_.values < 2) throw UsageError("naive bayes: bad shape");
    if (spec_.classes >= 2) layout_.add("pi", BlockKind::Simplex, spec_.classes);
    for (int c = 0; c < spec_.classes; ++c) {
      for (std::size_t d = 0; d < spec_.features; ++d) {
        layout_.add("phi_" + std::to_string(c) + "_" + std::to_string(d), BlockKind::Simplex, spec_.values);
      }
    }
  }

  std::string id() const override { return "naive-bayes"; }
  int num_classes() const override { return spec_.classes; }
  std::size_t feature_dim() const override { return spec_.features; }
  const ParameterLayout& layout() const override { return layout_; }
  bool supports_missing() const override { return true; }
  bool can_impute() const override { return true; }

  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    const auto logs = unpack(theta);
    double out = 0.0;
    if (spec_.classes >= 2) out += log_dirichlet_unconstrained(logs.log_pi, spec_.concentration);
    for (std::size_t b = 0; b < logs.log_phi.size(); b += spec_.values) {
      out += log_dirichlet_unconstrained(std::span<const double>(logs.log_phi).subspan(b, spec_.values),
                                         spec_.concentration);
    }
    return out;
  }

  std::vector<double> sample_prior(Rng& rng) const override {
    std::vector<double> theta(unconstrained_dim());
    std::vector<double> alpha;
    std::size_t offset = 0;
    for (const auto& block : layout_.blocks()) {
      alpha.assign(block.size, spec_.concentration);
      std::vector<double> p(block.size);
      sample_dirichlet(alpha, p, rng);
      for (double& v : p) v = std::max(v, 1e-300);
      simplex_to_free(p, std::span<double>(theta).subspan(offset, block.size - 1));
      offset += block.size - 1;
    }
    return theta;
  }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    check_dim(theta);
    return std::make_unique<Bound>(spec_, unpack(theta));
  }

  std::optional<std::vector<std::vector<Feature>>> discrete_support() const override {
    return detail::all_categorical_vectors(spec_.features, spec_.values);
  }

  Dataset simulate(std::span<const double> theta, std::size_t n, Rng& rng) const override {
    check_dim(theta);
    const auto logs = unpack(theta);
    std::vector<double> pi(logs.log_pi.size());
    for (std::size_t c = 0; c < pi.size(); ++c) pi[c] = std::exp(logs.log_pi[c]);
    std::discrete_distribution<int> pick(pi.begin(), pi.end());
    Bound bound(spec_, logs);
    Dataset out(spec_.classes, spec_.features);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = pick(rng);
      std::vector<Feature> x(spec_.features);
      bound.impute(c, x, rng);
      out.add(c, std::move(x));
    }
    return out;
  }

 private:
  struct Logs {
    std::vector<double> log_pi;   // C
    std::vector<double> log_phi;  // (C x D) x V
  };

  Logs unpack(std::span<const double> theta) const {
    Logs out;
    std::size_t offset = 0;
    out.log_pi.assign(spec_.classes, 0.0);
    if (spec_.classes >= 2) {
      log_softmax_pinned(theta.subspan(0, spec_.classes - 1), out.log_pi);
      offset = spec_.classes - 1;
    }
    const std::size_t blocks = spec_.classes * spec_.features;
    out.log_phi.resize(blocks * spec_.values);
    for (std::size_t b = 0; b < blocks; ++b) {
      log_softmax_pinned(theta.subspan(offset, spec_.values - 1),
                         std::span<double>(out.log_phi).subspan(b * spec_.values, spec_.values));
      offset += spec_.values - 1;
    }
    return out;
  }

  class Bound final : public BoundModel {
   public:
    Bound(const DiscreteNaiveBayesSpec& spec, Logs logs) : BoundModel(spec.classes), spec_(spec), logs_(std::move(logs)) {}

    double log_joint(int c, FeatureView x, Rng&) const override {
      if (x.size() != spec_.features) throw UsageError("naive bayes: feature dimension mismatch");
      double out = logs_.log_pi[c];
      for (std::size_t d = 0; d < spec_.features; ++d) {
        if (!x[d]) continue;
        out += logs_.log_phi[(c * spec_.features + d) * spec_.values + detail::category_index(*x[d], spec_.values)];
      }
      return out;
    }

    void impute(int c, std::span<Feature> x, Rng& rng) const override {
      std::vector<double> probs(spec_.values);
      for (std::size_t d = 0; d < spec_.features; ++d) {
        if (x[d]) continue;
        for (std::size_t v = 0; v < spec_.values; ++v) {
          probs[v] = std::exp(logs_.log_phi[(c * spec_.features + d) * spec_.values + v]);
        }
        std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
        x[d] = static_cast<double>(pick(rng));
      }
    }

   private:
    DiscreteNaiveBayesSpec spec_;
    Logs logs_;
  };

  DiscreteNaiveBayesSpec spec_;
  ParameterLayout layout_;
};

// A family over one categorical feature defined directly by a function that
// fills the C x V table of log p(c, x | theta). The table must be normalized.
class TabularFamily final : public ModelFamily {
 public:
  using TableFn = std::function<void(std::span<const double> theta, std::span<double> log_table)>;
  using PriorFn = std::function<double(std::span<const double> theta)>;
  using SampleFn = std::function<std::vector<double>(Rng&)>;

  TabularFamily(std::string id, int classes, std::size_t values, ParameterLayout layout, TableFn table, PriorFn prior,
                SampleFn sample)
      : id_(std::move(id)),
        classes_(classes),
        values_(values),
        layout_(std::move(layout)),
        table_(std::move(table)),
        prior_(std::move(prior)),
        sample_(std::move(sample)) {}

  std::string id() const override { return id_; }
  int num_classes() const override { return classes_; }
  std::size_t feature_dim() const override { return 1; }
  std::size_t num_values() const { return values_; }
  const ParameterLayout& layout() const override { return layout_; }
  bool supports_missing() const override { return true; }
  bool can_impute() const override { return true; }

  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    return prior_(theta);
  }
  std::vector<double> sample_prior(Rng& rng) const override { return sample_(rng); }

  std::vector<double> log_table(std::span<const double> theta) const {
    check_dim(theta);
    std::vector<double> table(static_cast<std::size_t>(classes_) * values_);
    table_(theta, table);
    return table;
  }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    return std::make_unique<Bound>(classes_, values_, log_table(theta));
  }

  std::optional<std::vector<std::vector<Feature>>> discrete_support() const override {
    return detail::all_categorical_vectors(1, values_);
  }

  Dataset simulate(std::span<const double> theta, std::size_t n, Rng& rng) const override {
    const auto table = log_table(theta);
    std::vector<double> probs(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) probs[i] = std::exp(table[i]);
    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
    Dataset out(classes_, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cell = pick(rng);
      out.add(static_cast<int>(cell / values_), {static_cast<double>(cell % values_)});
    }
    return out;
  }

 private:
  class Bound final : public BoundModel {
   public:
    Bound(int classes, std::size_t values, std::vector<double> table)
        : BoundModel(classes), values_(values), table_(std::move(table)) {}

    double log_joint(int c, FeatureView x, Rng&) const override {
      if (x.size() != 1) throw UsageError("tabular family: expects a single feature");
      const double* row = table_.data() + static_cast<std::size_t>(c) * values_;
      if (!x[0]) return log_sum_exp(std::span<const double>(row, values_));
      return row[detail::category_index(*x[0], values_)];
    }

    void impute(int c, std::span<Feature> x, Rng& rng) const override {
      if (x[0]) return;
      std::vector<double> probs(values_);
      for (std::size_t v = 0; v < values_; ++v) probs[v] = std::exp(table_[c * values_ + v]);
      std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
      x[0] = static_cast<double>(pick(rng));
    }

   private:
    std::size_t values_;
    std::vector<double> table_;
  };

  std::string id_;
  int classes_;
  std::size_t values_;
  ParameterLayout layout_;
  TableFn table_;
  PriorFn prior_;
  SampleFn sample_;
};

// One-parameter family used for grid checks: p(c) = 1/2 and
// p(x | c, t) proportional to exp(t * a_c(x)) over x in {0, 1, 2}, with
// a_0 = (-1, 0, 1) and a_1 = (0.5, 0, -0.5). Prior t ~ N(0, prior_sd^2).
inline TabularFamily make_scalar_tilt_family(double prior_sd = 2.0) {
  ParameterLayout layout;
  layout.add("tilt", BlockKind::Real, 1);
  auto table = [](std::span<const double> theta, std::span<double> out) {
    static constexpr double a[2][3] = {{-1.0, 0.0, 1.0}, {0.5, 0.0, -0.5}};
    for (int c = 0; c < 2; ++c) {
      double row[3];
      for (int v = 0; v < 3; ++v) row[v] = theta[0] * a[c][v];
      const double norm = log_sum_exp(row);
      for (int v = 0; v < 3; ++v) out[c * 3 + v] = row[v] - norm - std::numbers::ln2;
    }
  };
  auto prior = [prior_sd](std::span<const double> theta) { return log_normal_pdf(theta[0], 0.0, prior_sd); };
  auto sample = [prior_sd](Rng& rng) {
    std::normal_distribution<double> normal(0.0, prior_sd);
    return std::vector<double>{normal(rng)};
  };
  return TabularFamily("scalar-tilt", 2, 3, std::move(layout), table, prior, sample);
}

}  // namespace dispost
