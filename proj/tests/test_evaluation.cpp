#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "dispost/evaluation.hpp"
#include "dispost/models.hpp"

using namespace dispost;

namespace {

// p(c, v | t) for the scalar tilt family, written out independently
double tilt_joint(int c, int v, double t) {
  const double a[2][3] = {{-1.0, 0.0, 1.0}, {0.5, 0.0, -0.5}};
  double z = 0.0;
  for (int w = 0; w < 3; ++w) z += std::exp(t * a[c][w]);
  return 0.5 * std::exp(t * a[c][v]) / z;
}

struct HandKl {
  double joint = 0.0, cond = 0.0, margin = 0.0;
};

HandKl tilt_kl(double tp, double tq) {
  HandKl out;
  for (int v = 0; v < 3; ++v) {
    const double px = tilt_joint(0, v, tp) + tilt_joint(1, v, tp);
    const double qx = tilt_joint(0, v, tq) + tilt_joint(1, v, tq);
    out.margin += px * std::log(px / qx);
    for (int c = 0; c < 2; ++c) {
      const double p = tilt_joint(c, v, tp), q = tilt_joint(c, v, tq);
      out.joint += p * std::log(p / q);
      out.cond += p * std::log((p / px) / (q / qx));
    }
  }
  return out;
}

}  // namespace

TEST(Kl, ZeroAtTruth) {
  const auto tilt = make_scalar_tilt_family();
  const std::vector<double> t{1.3};
  const KlReport r = kl_report(tilt, t, tilt, t);
  EXPECT_NEAR(r.k_joint, 0.0, 1e-14);
  EXPECT_NEAR(r.k_cond, 0.0, 1e-14);
  EXPECT_NEAR(r.margin_kl, 0.0, 1e-14);
  EXPECT_FALSE(r.infinite);
}

TEST(Kl, MatchesHandEnumeration) {
  const auto tilt = make_scalar_tilt_family();
  for (auto [tp, tq] : {std::pair{1.0, 0.0}, std::pair{-2.0, 0.5}, std::pair{0.3, 3.0}}) {
    const HandKl hand = tilt_kl(tp, tq);
    const KlReport r = kl_report(tilt, std::vector<double>{tp}, tilt, std::vector<double>{tq});
    EXPECT_NEAR(r.k_joint, hand.joint, 1e-12);
    EXPECT_NEAR(r.k_cond, hand.cond, 1e-12);
    EXPECT_NEAR(r.margin_kl, hand.margin, 1e-12);
    EXPECT_NEAR(r.identity_residual, 0.0, 1e-12);
    EXPECT_GE(r.k_joint + 1e-15, r.k_cond);
  }
}

TEST(Kl, MonteCarloAgreesWithExact) {
  const auto tilt = make_scalar_tilt_family();
  const std::vector<double> tp{1.0}, tq{-0.5};
  const HandKl hand = tilt_kl(1.0, -0.5);
  const KlReport r = kl_report(tilt, tp, tilt, tq, KlIntegration::monte_carlo(20000, 3));
  EXPECT_GT(r.k_cond_se, 0.0);
  EXPECT_NEAR(r.k_cond, hand.cond, 4.0 * r.k_cond_se);
  EXPECT_NEAR(r.k_joint, hand.joint, 4.0 * r.k_joint_se);
}

TEST(Kl, ContinuousIdentityHolds) {
  ConstrainedGaussianMixtureSpec spec;
  spec.dim = 2;
  spec.slope = 0.5;
  const ConstrainedGaussianMixture cgm(spec);
  const std::vector<double> tp{5.0, 9.0, 9.0, 8.0}, tq{6.0, 9.5, 8.0, 8.0};
  const KlReport r = kl_report(cgm, tp, cgm, tq, KlIntegration::monte_carlo(5000, 4));
  EXPECT_NEAR(r.identity_residual, 0.0, 1e-9);
  EXPECT_GT(r.k_joint, 0.0);
}

TEST(Kl, RegressionHasNoJointDivergence) {
  const TrueToyModel truth;
  LogisticRegressionSpec spec;
  spec.dim = 10;
  const LogisticRegression reg(spec);
  const std::vector<double> theta(11, 0.0);
  const KlReport r = kl_report(truth, std::vector<double>{}, reg, theta, KlIntegration::monte_carlo(2000, 5));
  EXPECT_TRUE(std::isfinite(r.k_cond));
  EXPECT_EQ(r.k_joint, kPosInf);
  EXPECT_THROW(k_joint(truth, std::vector<double>{}, reg, theta, KlIntegration::monte_carlo(100, 5)),
               ConfigurationError);
}

TEST(Kl, ExpectedKcondWeights) {
  const auto tilt = make_scalar_tilt_family();
  const std::vector<double> truth{1.0};
  const std::vector<std::vector<double>> draws{{0.0}, {2.0}};
  const double k0 = tilt_kl(1.0, 0.0).cond, k1 = tilt_kl(1.0, 2.0).cond;
  EXPECT_NEAR(expected_k_cond(tilt, truth, tilt, draws), 0.5 * (k0 + k1), 1e-12);
  const std::vector<double> w{3.0, 1.0};
  EXPECT_NEAR(expected_k_cond(tilt, truth, tilt, draws, {}, w), 0.75 * k0 + 0.25 * k1, 1e-12);
  const std::vector<double> only_first{1.0, 0.0};
  EXPECT_NEAR(expected_k_cond(tilt, truth, tilt, draws, {}, only_first), k0, 1e-12);
  EXPECT_THROW(expected_k_cond(tilt, truth, tilt, std::vector<std::vector<double>>{}), UsageError);
}

TEST(Predictive, AveragesConditionals) {
  const auto tilt = make_scalar_tilt_family();
  const std::vector<std::vector<double>> draws{{0.0}, {2.0}};
  const std::vector<Feature> x{2.0};
  const auto p = predictive(tilt, draws, x);
  for (int c = 0; c < 2; ++c) {
    double expected = 0.0;
    for (double t : {0.0, 2.0}) expected += 0.5 * tilt_joint(c, 2, t) / (tilt_joint(0, 2, t) + tilt_joint(1, 2, t));
    EXPECT_NEAR(p.raw[c], expected, 1e-14);
    EXPECT_NEAR(p.probs[c], expected, 1e-12);
  }
  EXPECT_THROW(predictive(tilt, std::vector<std::vector<double>>{}, x), UsageError);
}

TEST(Predictive, LinearInDrawSets) {
  const auto tilt = make_scalar_tilt_family();
  Rng rng(6);
  std::vector<std::vector<double>> a, b;
  for (int i = 0; i < 5; ++i) {
    a.push_back(tilt.sample_prior(rng));
    b.push_back(tilt.sample_prior(rng));
  }
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  const std::vector<Feature> x{0.0};
  const auto pa = predictive(tilt, a, x), pb = predictive(tilt, b, x), pab = predictive(tilt, both, x);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(pab.raw[c], 0.5 * (pa.raw[c] + pb.raw[c]), 1e-14);
}

TEST(Perplexity, KnownValues) {
  const std::vector<int> labels{0, 1, 2};
  EXPECT_NEAR(perplexity(labels, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), 1.0, 1e-15);
  const std::vector<int> four{0, 3};
  EXPECT_NEAR(perplexity(four, {{.25, .25, .25, .25}, {.25, .25, .25, .25}}), 4.0, 1e-12);
  // a zero probability is clipped to e^-22
  EXPECT_NEAR(std::log(perplexity(std::vector<int>{1}, {{1.0, 0.0}})), 22.0, 1e-12);
  EXPECT_THROW(perplexity(std::vector<int>{}, {}), UsageError);
  EXPECT_THROW(perplexity(std::vector<int>{2}, {{0.5, 0.5}}), UsageError);
}

TEST(Perplexity, ClipAndRenormalize) {
  const auto p = clip_and_renormalize(std::vector<double>{1.0, 0.0});
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
  EXPECT_NEAR(p[1], std::exp(-22.0) / (1.0 + std::exp(-22.0)), 1e-20);
  EXPECT_DOUBLE_EQ(clip_probability(2.0), 1.0);
}

TEST(Predictive, ReportAndCsv) {
  const auto tilt = make_scalar_tilt_family();
  Dataset test(2, 1);
  test.add(0, {2.0});
  test.add(1, {0.0});
  const std::vector<std::vector<double>> draws{{1.0}};
  const auto r = predictive_report(tilt, draws, test);
  const double p0 = tilt_joint(0, 2, 1.0) / (tilt_joint(0, 2, 1.0) + tilt_joint(1, 2, 1.0));
  const double p1 = tilt_joint(1, 0, 1.0) / (tilt_joint(0, 0, 1.0) + tilt_joint(1, 0, 1.0));
  EXPECT_NEAR(r.mean_logloss, -0.5 * (std::log(p0) + std::log(p1)), 1e-12);
  EXPECT_NEAR(r.perplexity, std::exp(r.mean_logloss), 1e-12);
  std::ostringstream csv;
  write_predictive_csv(r, csv);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "point_id,true_class,p_0,p_1,logloss");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_THROW(predictive_report(tilt, draws, Dataset(2, 1)), UsageError);
}

TEST(Bootstrap, DegenerateAndBounds) {
  const std::vector<double> same(10, 2.5);
  const Interval i = bootstrap_ci(same);
  EXPECT_DOUBLE_EQ(i.lower, 2.5);
  EXPECT_DOUBLE_EQ(i.upper, 2.5);
  const std::vector<double> v{1.0, 4.0, 2.0, 8.0, 3.0};
  const Interval j = bootstrap_ci(v, 0.9, 7);
  EXPECT_GE(j.lower, 1.0);
  EXPECT_LE(j.upper, 8.0);
  EXPECT_LE(j.lower, j.upper);
  const Interval k = bootstrap_ci(v, 0.9, 7);
  EXPECT_EQ(j.lower, k.lower);
  EXPECT_EQ(j.upper, k.upper);
  EXPECT_THROW(bootstrap_ci(std::vector<double>{1.0}), UsageError);
  EXPECT_THROW(bootstrap_ci(v, 1.0), UsageError);
}

TEST(Bootstrap, CoverageOfMean) {
  // percentile intervals for a normal mean with n = 30 cover at close to the
  // nominal rate; 400 repetitions give a binomial sd of about 1.1%
  Rng rng(8);
  std::normal_distribution<double> normal(1.0, 3.0);
  int covered = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> v(30);
    for (double& x : v) x = normal(rng);
    const Interval i = bootstrap_ci(v, 0.95, 100 + r, 2000);
    covered += i.lower <= 1.0 && 1.0 <= i.upper;
  }
  const double rate = static_cast<double>(covered) / reps;
  EXPECT_GT(rate, 0.89);
  EXPECT_LT(rate, 0.99);
}
