#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "dispost/models.hpp"

using namespace dispost;

namespace {

double normal_logpdf(double x, double m, double s) {
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(s) - 0.5 * (x - m) * (x - m) / (s * s);
}

double total_joint_mass(const ModelFamily& model, const std::vector<double>& theta) {
  const auto support = model.discrete_support();
  Rng rng(1);
  auto bound = model.bind(theta);
  double total = 0.0;
  for (const auto& x : *support) {
    for (int c = 0; c < model.num_classes(); ++c) total += std::exp(bound->log_joint(c, x, rng));
  }
  return total;
}

std::vector<double> free_coords(const std::vector<double>& p) {
  std::vector<double> u(p.size() - 1);
  simplex_to_free(p, u);
  return u;
}

}  // namespace

TEST(DensityCore, MarginOfTwoClasses) {
  // table with p(0, x=0) = 0.3 and p(1, x=0) = 0.2
  ParameterLayout layout;
  const TabularFamily fam(
      "fixed", 2, 2, layout,
      [](std::span<const double>, std::span<double> out) {
        out[0] = std::log(0.3);
        out[1] = std::log(0.2);
        out[2] = std::log(0.2);
        out[3] = std::log(0.3);
      },
      [](std::span<const double>) { return 0.0; }, [](Rng&) { return std::vector<double>{}; });
  const std::vector<Feature> x{0.0};
  EXPECT_NEAR(log_margin(fam, x, {}), std::log(0.5), 1e-15);
  EXPECT_NEAR(log_conditional(fam, 0, x, {}), std::log(0.6), 1e-15);
  EXPECT_THROW(log_conditional(fam, 2, x, {}), UsageError);
}

TEST(DensityCore, SingleClassConditionalIsZero) {
  DiscreteNaiveBayesSpec spec;
  spec.classes = 1;
  spec.features = 2;
  const DiscreteNaiveBayes nb(spec);
  Rng rng(2);
  const auto theta = nb.sample_prior(rng);
  const std::vector<Feature> x{1.0, 2.0};
  EXPECT_NEAR(log_conditional(nb, 0, x, theta), 0.0, 1e-15);
  EXPECT_NEAR(log_margin(nb, x, theta), log_joint(nb, 0, x, theta), 1e-15);
}

TEST(DensityCore, DiscreteFamiliesNormalize) {
  Rng rng(3);
  DiscreteNaiveBayesSpec spec;
  spec.classes = 3;
  spec.features = 2;
  spec.values = 3;
  const DiscreteNaiveBayes nb(spec);
  const auto tilt = make_scalar_tilt_family();
  for (int i = 0; i < 100; ++i) {
    EXPECT_NEAR(total_joint_mass(nb, nb.sample_prior(rng)), 1.0, 1e-10);
    EXPECT_NEAR(total_joint_mass(tilt, tilt.sample_prior(rng)), 1.0, 1e-10);
  }
}

TEST(DensityCore, ConditionalsNormalizeAndAreNonPositive) {
  Rng rng(4);
  DiscreteNaiveBayesSpec spec;
  spec.classes = 4;
  spec.features = 3;
  const DiscreteNaiveBayes nb(spec);
  for (int i = 0; i < 100; ++i) {
    const auto theta = nb.sample_prior(rng);
    auto bound = nb.bind(theta);
    const auto support = nb.discrete_support();
    for (const auto& x : *support) {
      std::vector<double> cond(4);
      bound->log_conditionals(x, cond, rng);
      double total = 0.0;
      for (double v : cond) {
        EXPECT_LE(v, 0.0);
        total += std::exp(v);
      }
      EXPECT_NEAR(total, 1.0, 1e-10);
    }
  }
}

TEST(DensityCore, ConditionalMatchesEnumeratedTable) {
  // 2 classes, one 3-valued feature: p(c | x) = p(c, x) / sum_c p(c, x) by hand
  DiscreteNaiveBayesSpec spec;
  spec.classes = 2;
  spec.features = 1;
  spec.values = 3;
  const DiscreteNaiveBayes nb(spec);
  const double pis[] = {0.2, 0.5, 0.7};
  for (double pi0 : pis) {
    const std::vector<double> pi{pi0, 1.0 - pi0};
    const std::vector<double> phi0{0.1, 0.3, 0.6};
    const std::vector<double> phi1{0.5, 0.25, 0.25};
    std::vector<double> theta;
    for (const auto* p : {&pi, &phi0, &phi1}) {
      const auto u = free_coords(*p);
      theta.insert(theta.end(), u.begin(), u.end());
    }
    for (int v = 0; v < 3; ++v) {
      const double j0 = pi[0] * phi0[v];
      const double j1 = pi[1] * phi1[v];
      const std::vector<Feature> x{static_cast<double>(v)};
      EXPECT_NEAR(log_joint(nb, 0, x, theta), std::log(j0), 1e-12);
      EXPECT_NEAR(log_conditional(nb, 0, x, theta), std::log(j0 / (j0 + j1)), 1e-12);
      EXPECT_NEAR(log_conditional(nb, 1, x, theta), std::log(j1 / (j0 + j1)), 1e-12);
    }
  }
}

TEST(ConstrainedGaussianMixture, SlopeZeroFixesSigma) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 3;
  const ConstrainedGaussianMixture cgm(spec);
  for (double mu : {-5.0, 0.0, 3.0, 11.0}) EXPECT_DOUBLE_EQ(cgm.sigma(mu), 2.0);
}

TEST(ConstrainedGaussianMixture, DensityAtMean) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 1;
  const ConstrainedGaussianMixture cgm(spec);
  const std::vector<double> theta{4.0, -1.0};
  const std::vector<Feature> x{4.0};
  EXPECT_NEAR(log_joint(cgm, 0, x, theta), std::log(0.5) + std::log(1.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi))), 1e-14);
}

TEST(ConstrainedGaussianMixture, SlopeOneAtThree) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 1;
  spec.slope = 1.0;
  const ConstrainedGaussianMixture cgm(spec);
  const std::vector<double> theta{3.0, 8.0};
  const double expected = std::log(0.5) + normal_logpdf(3.0, 3.0, 5.0);
  EXPECT_NEAR(log_joint(cgm, 0, std::vector<Feature>{3.0}, theta), expected, 1e-14);
  // the class-0 component integrates to 1/2 over x
  double mass = 0.0;
  const double h = 1e-3;
  for (double x = -60.0; x <= 66.0; x += h) mass += std::exp(log_joint(cgm, 0, std::vector<Feature>{x}, theta)) * h;
  EXPECT_NEAR(mass, 0.5, 1e-6);
}

TEST(ConstrainedGaussianMixture, MarginMatchesDirectMixture) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 2;
  spec.slope = 0.5;
  const ConstrainedGaussianMixture cgm(spec);
  const std::vector<double> theta{5.0, 9.0, 9.0, 8.0};  // class-major means
  const std::vector<Feature> x{6.0, 7.5};
  auto comp = [&](double m0, double m1) {
    return std::exp(normal_logpdf(6.0, m0, 0.5 * m0 + 2.0) + normal_logpdf(7.5, m1, 0.5 * m1 + 2.0));
  };
  const double direct = std::log(0.5 * comp(5.0, 9.0) + 0.5 * comp(9.0, 8.0));
  EXPECT_NEAR(log_margin(cgm, x, theta), direct, 1e-12);
}

TEST(ConstrainedGaussianMixture, SigmaFloorRejects) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 1;
  spec.slope = 2.0;
  const ConstrainedGaussianMixture cgm(spec);
  const std::vector<double> theta{-1.0, 5.0};  // sigma = 0 for class 0
  EXPECT_FALSE(cgm.bind(theta)->in_support());
  EXPECT_EQ(log_joint(cgm, 1, std::vector<Feature>{5.0}, theta), kNegInf);
  EXPECT_THROW(log_joint(cgm, 0, std::vector<Feature>{1.0, 2.0}, theta), UsageError);
}

TEST(ConstrainedGaussianMixture, PriorDrawsStayInSupport) {
  ConstrainedGaussianMixtureSpec spec;
  spec.slope = 2.0;
  const ConstrainedGaussianMixture cgm(spec);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) EXPECT_TRUE(cgm.bind(cgm.sample_prior(rng))->in_support());
}

TEST(ConstrainedGaussianMixture, SlopeZeroConditionalIsFixedSigmaNaiveBayes) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 3;
  const ConstrainedGaussianMixture cgm(spec);
  Rng rng(6);
  std::normal_distribution<double> normal(7.0, 4.0);
  for (int i = 0; i < 50; ++i) {
    const auto theta = cgm.sample_prior(rng);
    std::vector<Feature> x(3);
    for (auto& v : x) v = normal(rng);
    double s[2] = {0.0, 0.0};
    for (int c = 0; c < 2; ++c) {
      for (int d = 0; d < 3; ++d) s[c] += normal_logpdf(*x[d], theta[c * 3 + d], 2.0);
    }
    const double expected = s[0] - std::log(std::exp(s[0]) + std::exp(s[1]));
    EXPECT_NEAR(log_conditional(cgm, 0, x, theta), expected, 1e-10);
  }
}

TEST(TrueToy, SimulationMoments) {
  const TrueToyModel truth;
  Rng rng(7);
  const std::size_t n = 10000;
  const Dataset data = simulate_toy(truth, n, rng);
  std::size_t ones = 0;
  double class0_dim0 = 0.0, noise = 0.0;
  std::size_t n0 = 0;
  for (const auto& o : data.observations) {
    ones += o.label;
    if (o.label == 0) {
      class0_dim0 += *o.features[0];
      ++n0;
    }
    noise += *o.features[5];
  }
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 3.0 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(class0_dim0 / n0, 5.0, 3.0 * 2.0 / std::sqrt(static_cast<double>(n0)));
  EXPECT_NEAR(noise / n, 9.0, 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_THROW(simulate_toy(truth, 0, rng), UsageError);
}

TEST(LogisticRegression, ZeroWeightsUniform) {
  LogisticRegressionSpec spec;
  spec.dim = 2;
  spec.classes = 4;
  const LogisticRegression reg(spec);
  const std::vector<double> theta(reg.unconstrained_dim(), 0.0);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(log_conditional(reg, c, std::vector<Feature>{1.0, -3.0}, theta), std::log(0.25), 1e-15);
}

TEST(LogisticRegression, ScoreDifferenceLogThree) {
  LogisticRegressionSpec spec;
  spec.dim = 1;
  spec.classes = 2;
  const LogisticRegression reg(spec);
  const std::vector<double> theta{std::log(3.0), 0.0};  // intercept ln 3, zero weight
  EXPECT_NEAR(std::exp(log_conditional(reg, 0, std::vector<Feature>{2.0}, theta)), 0.75, 1e-15);
  EXPECT_NEAR(std::exp(log_conditional(reg, 1, std::vector<Feature>{2.0}, theta)), 0.25, 1e-15);
}

TEST(LogisticRegression, CenterShiftsInterceptOnly) {
  LogisticRegressionSpec plain;
  plain.dim = 2;
  LogisticRegressionSpec centered = plain;
  centered.center = {1.0, -2.0};
  const LogisticRegression a(plain), b(centered);
  // b + w.(x - m) = (b - w.m) + w.x
  const std::vector<double> tb{0.4, 1.5, -0.5};
  const std::vector<double> ta{0.4 - (1.5 * 1.0 + -0.5 * -2.0), 1.5, -0.5};
  const std::vector<Feature> x{0.3, 4.0};
  EXPECT_NEAR(log_conditional(a, 0, x, ta), log_conditional(b, 0, x, tb), 1e-12);
}

TEST(LogisticRegression, NoMarginAndBoxPrior) {
  LogisticRegressionSpec spec;
  spec.dim = 1;
  const LogisticRegression reg(spec);
  EXPECT_FALSE(reg.has_margin());
  EXPECT_THROW(log_margin(reg, std::vector<Feature>{1.0}, std::vector<double>{0.0, 0.0}), ConfigurationError);
  EXPECT_THROW(log_joint(reg, 0, std::vector<Feature>{1.0}, std::vector<double>{0.0, 0.0}), ConfigurationError);
  EXPECT_EQ(reg.log_prior(std::vector<double>{31.0, 0.0}), kNegInf);
  EXPECT_NEAR(reg.log_prior(std::vector<double>{1.0, -2.0}), -2.0 * std::log(60.0), 1e-15);
  EXPECT_EQ(reg.unconstrained_dim(), 2u);
}

TEST(MixtureOfUnigrams, EmptyDocumentAndDirectFormula) {
  MixtureOfUnigramsSpec spec;
  spec.vocab = 2;
  spec.classes = 4;
  const MixtureOfUnigrams mum(spec);
  std::vector<double> theta(3, 0.0);  // pi uniform
  for (int c = 0; c < 4; ++c) theta.push_back(0.0);  // beta_c = (0.5, 0.5)
  EXPECT_NEAR(log_joint(mum, 2, std::vector<Feature>{0.0, 0.0}, theta), std::log(0.25), 1e-14);
  EXPECT_NEAR(log_joint(mum, 1, std::vector<Feature>{2.0, 2.0}, theta), std::log(0.25) + 4.0 * std::log(0.5), 1e-14);
  EXPECT_THROW(log_joint(mum, 1, std::vector<Feature>{-1.0, 2.0}, theta), UsageError);
}

TEST(MixtureOfUnigrams, SharedWordDistributionCarriesNoClassInformation) {
  MixtureOfUnigramsSpec spec;
  spec.vocab = 5;
  spec.classes = 3;
  const MixtureOfUnigrams mum(spec);
  Rng rng(8);
  const std::vector<double> pi{0.2, 0.3, 0.5};
  const std::vector<double> beta{0.1, 0.4, 0.2, 0.2, 0.1};
  std::vector<double> theta = free_coords(pi);
  for (int c = 0; c < 3; ++c) {
    const auto u = free_coords(beta);
    theta.insert(theta.end(), u.begin(), u.end());
  }
  const auto data = mum.simulate_corpus(theta, 20, 30, rng);
  for (const auto& o : data.observations) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(log_conditional(mum, c, o.features, theta), std::log(pi[c]), 1e-10);
  }
}

TEST(MixtureOfUnigrams, SimulatedWordFrequencies) {
  MixtureOfUnigramsSpec spec;
  spec.vocab = 4;
  spec.classes = 2;
  const MixtureOfUnigrams mum(spec);
  const std::vector<double> beta0{0.1, 0.2, 0.3, 0.4}, beta1{0.7, 0.1, 0.1, 0.1};
  std::vector<double> theta = free_coords({0.5, 0.5});
  for (const auto* b : {&beta0, &beta1}) {
    const auto u = free_coords(*b);
    theta.insert(theta.end(), u.begin(), u.end());
  }
  Rng rng(9);
  const auto data = mum.simulate_corpus(theta, 2000, 50, rng);
  std::vector<double> counts(8, 0.0), totals(2, 0.0);
  for (const auto& o : data.observations) {
    for (int w = 0; w < 4; ++w) {
      counts[o.label * 4 + w] += *o.features[w];
      totals[o.label] += *o.features[w];
    }
  }
  for (int c = 0; c < 2; ++c) {
    const auto& b = c == 0 ? beta0 : beta1;
    for (int w = 0; w < 4; ++w) {
      const double sd = std::sqrt(b[w] * (1.0 - b[w]) / totals[c]);
      EXPECT_NEAR(counts[c * 4 + w] / totals[c], b[w], 3.0 * sd);
    }
  }
  const auto empty = mum.simulate_corpus(theta, 5, 0, rng);
  for (const auto& o : empty.observations) {
    for (const auto& f : o.features) EXPECT_EQ(*f, 0.0);
  }
}

TEST(MixtureOfUnigrams, DisjointWordsSeparateClasses) {
  MixtureOfUnigramsSpec spec;
  spec.vocab = 2;
  spec.classes = 2;
  const MixtureOfUnigrams mum(spec);
  std::vector<double> theta{0.0, 40.0, -40.0};  // beta_0 ~ (1, 0), beta_1 ~ (0, 1)
  Rng rng(10);
  const auto data = mum.simulate_corpus(theta, 100, 10, rng);
  for (const auto& o : data.observations) EXPECT_GT(std::exp(log_conditional(mum, o.label, o.features, theta)), 0.5);
}

TEST(MixtureLda, SingleTopicIsExact) {
  MixtureLdaSpec spec;
  spec.vocab = 3;
  spec.topics = 1;
  spec.classes = 2;
  const MixtureLda lda(spec);
  Rng rng(11);
  const auto theta = lda.sample_prior(rng);
  const auto p = to_constrained(lda, theta);  // pi_class, beta_0
  const std::vector<Feature> x{2.0, 0.0, 1.0};
  const McEstimate est = lda.estimate_log_joint(theta, 1, x, rng);
  EXPECT_NEAR(est.log_value, std::log(p[0][1]) + 2.0 * std::log(p[1][0]) + std::log(p[1][2]), 1e-12);
  EXPECT_EQ(est.log_se, 0.0);
}

TEST(MixtureLda, EmptyDocumentIsClassPrior) {
  MixtureLdaSpec spec;
  spec.vocab = 3;
  spec.topics = 3;
  spec.classes = 2;
  const MixtureLda lda(spec);
  Rng rng(12);
  const auto theta = lda.sample_prior(rng);
  const auto p = to_constrained(lda, theta);
  EXPECT_NEAR(lda.estimate_log_joint(theta, 0, std::vector<Feature>{0.0, 0.0, 0.0}, rng).log_value, std::log(p[0][0]), 1e-14);
}

TEST(MixtureLda, SingleWordMatchesDirichletMean) {
  // E[pi(0) b0(w) + pi(1) b1(w)] = alpha_0 b0(w) + alpha_1 b1(w) for alpha on the simplex
  MixtureLdaSpec spec;
  spec.vocab = 2;
  spec.topics = 2;
  spec.classes = 2;
  spec.mc.min_draws = 50000;
  const MixtureLda lda(spec);
  Rng rng(13);
  for (int trial = 0; trial < 3; ++trial) {
    const auto theta = lda.sample_prior(rng);
    const auto p = to_constrained(lda, theta);
    for (int c = 0; c < 2; ++c) {
      for (int w = 0; w < 2; ++w) {
        std::vector<Feature> x{0.0, 0.0};
        x[w] = 1.0;
        const double exact = std::log(p[0][c]) + std::log(p[1 + c][0] * p[3][w] + p[1 + c][1] * p[4][w]);
        const McEstimate est = lda.estimate_log_joint(theta, c, x, rng);
        EXPECT_GE(est.draws, 50000u);
        EXPECT_LT(std::abs(est.log_value - exact), 3.0 * est.log_se + 1e-12);
      }
    }
  }
}

TEST(MixtureLda, StoppingRuleAndCap) {
  MixtureLdaSpec spec;
  spec.vocab = 10;
  spec.topics = 4;
  spec.classes = 2;
  const MixtureLda lda(spec);
  Rng rng(14);
  const auto theta = lda.sample_prior(rng);
  std::vector<Feature> x(10, 2.0);
  const McEstimate est = lda.estimate_log_joint(theta, 0, x, rng);
  EXPECT_EQ(est.draws % spec.mc.batch, 0u);
  EXPECT_LE(est.draws, spec.mc.max_draws);
  if (est.converged) {
    EXPECT_LT(est.log_se, 0.05);
  }

  MixtureLdaSpec tight = spec;
  tight.mc.rel_se_target = 1e-9;
  tight.mc.max_draws = 512;
  const MixtureLda capped(tight);
  const McEstimate hit = capped.estimate_log_joint(theta, 0, x, rng);
  EXPECT_FALSE(hit.converged);
  EXPECT_EQ(hit.draws, 512u);
  EXPECT_EQ(capped.capped_evaluations(), 1u);
}

TEST(MixtureLda, MissingCountsRejected) {
  MixtureLdaSpec spec;
  spec.vocab = 2;
  spec.classes = 2;
  const MixtureLda lda(spec);
  Rng rng(15);
  const auto theta = lda.sample_prior(rng);
  EXPECT_THROW(lda.estimate_log_joint(theta, 0, std::vector<Feature>{1.0, std::nullopt}, rng), ConfigurationError);
}

TEST(InducedFamily, JointIsBaseConditional) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 2;
  spec.slope = 1.0;
  const ConstrainedGaussianMixture cgm(spec);
  const std::vector<Feature> x{6.0, 8.0};
  const InducedClassFamily induced(cgm, x);
  Rng rng(16);
  const auto theta = cgm.sample_prior(rng);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(log_joint(induced, c, std::vector<Feature>{}, theta), log_conditional(cgm, c, x, theta), 1e-14);
  }
  EXPECT_EQ(induced.feature_dim(), 0u);
  EXPECT_EQ(induced.log_prior(theta), cgm.log_prior(theta));
}
