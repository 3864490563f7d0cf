#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "dispost/model.hpp"
#include "dispost/numeric.hpp"
#include "dispost/sample_io.hpp"
#include "dispost/sampler.hpp"

namespace dispost {

// How the expectation over x ~ p(x | theta_true) is formed.
struct KlIntegration {
  enum class Mode { Exact, MonteCarlo };
  Mode mode = Mode::Exact;
  std::size_t samples = 10000;
  std::uint64_t seed = 1;

  static KlIntegration exact() { return {}; }
  static KlIntegration monte_carlo(std::size_t n, std::uint64_t seed) { return {Mode::MonteCarlo, n, seed}; }
};

struct KlReport {
  double k_joint = 0.0;
  double k_cond = 0.0;
  double margin_kl = 0.0;
  double identity_residual = 0.0;  // k_joint - k_cond - margin_kl
  bool infinite = false;           // model assigns zero where the truth does not
  // Monte Carlo only: jackknife standard errors (16 blocks)
  double k_cond_se = 0.0;
  double k_joint_se = 0.0;
};

namespace detail {

inline std::vector<std::vector<Feature>> kl_points(const ModelFamily& truth, std::span<const double> truth_theta,
                                                   const KlIntegration& integration, bool& exact) {
  if (integration.mode == KlIntegration::Mode::Exact) {
    auto support = truth.discrete_support();
    if (!support) throw UsageError("exact KL needs a family with enumerable discrete support");
    exact = true;
    return *support;
  }
  exact = false;
  if (integration.samples < 2) throw UsageError("Monte Carlo KL needs at least two samples");
  Rng rng(integration.seed);
  const Dataset sample = truth.simulate(truth_theta, integration.samples, rng);
  std::vector<std::vector<Feature>> out;
  out.reserve(sample.size());
  for (const auto& o : sample.observations) out.push_back(o.features);
  return out;
}

// Per-point contributions to (k_cond, margin_kl, k_joint).
inline void kl_terms(std::size_t C, const BoundModel& true_bound, const BoundModel& model_bound, bool model_has_margin,
                     FeatureView x, Rng& rng, double& cond_term, double& margin_term, double& joint_term,
                     double& log_px, bool& infinite) {
  std::vector<double> tj(C);
  std::vector<double> mj(C);
  true_bound.class_log_joints(x, tj, rng);
  log_px = log_sum_exp(tj);
  std::vector<double> mc(C);
  double model_margin = 0.0;
  if (model_has_margin) {
    model_bound.class_log_joints(x, mj, rng);
    model_margin = log_sum_exp(mj);
    for (std::size_t c = 0; c < C; ++c) mc[c] = mj[c] - model_margin;
  } else {
    model_bound.log_conditionals(x, mc, rng);
  }
  cond_term = 0.0;
  joint_term = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double log_true_cond = tj[c] - log_px;
    if (log_true_cond == kNegInf) continue;
    const double p = std::exp(log_true_cond);
    if (mc[c] == kNegInf) infinite = true;
    cond_term += p * (log_true_cond - mc[c]);
    if (model_has_margin) joint_term += p * (tj[c] - mj[c]);
  }
  margin_term = model_has_margin ? log_px - model_margin : 0.0;
}

inline std::vector<double> block_means(const std::vector<double>& values, std::size_t blocks) {
  std::vector<double> out(blocks, 0.0);
  std::vector<std::size_t> counts(blocks, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i % blocks] += values[i];
    ++counts[i % blocks];
  }
  for (std::size_t b = 0; b < blocks; ++b) out[b] /= static_cast<double>(std::max<std::size_t>(counts[b], 1));
  return out;
}

}  // namespace detail

// K_JOINT, K_COND and the margin KL between a true model and a model at theta,
// all under x ~ p(x | truth). Exact on discrete support, Monte Carlo otherwise.
inline KlReport kl_report(const ModelFamily& truth, std::span<const double> truth_theta, const ModelFamily& model,
                          std::span<const double> theta, const KlIntegration& integration = {}) {
  if (truth.num_classes() != model.num_classes() || truth.feature_dim() != model.feature_dim()) {
    throw UsageError("kl: true model and model have different shapes");
  }
  bool exact = false;
  const auto points = detail::kl_points(truth, truth_theta, integration, exact);
  auto true_bound = truth.bind(truth_theta);
  auto model_bound = model.bind(theta);
  Rng rng(derive_seed(integration.seed, {1}));

  KlReport report;
  CompensatedSum cond_sum, margin_sum, joint_sum;
  std::vector<double> cond_terms, joint_terms;
  for (const auto& x : points) {
    double cond = 0.0, margin = 0.0, joint = 0.0, log_px = 0.0;
    detail::kl_terms(static_cast<std::size_t>(truth.num_classes()), *true_bound, *model_bound, model.has_margin(), x,
                     rng, cond, margin, joint, log_px, report.infinite);
    if (exact) {
      if (log_px == kNegInf) continue;
      const double w = std::exp(log_px);
      cond_sum.add(w * cond);
      margin_sum.add(w * margin);
      joint_sum.add(w * joint);
    } else {
      cond_sum.add(cond);
      margin_sum.add(margin);
      joint_sum.add(joint);
      cond_terms.push_back(cond);
      joint_terms.push_back(joint);
    }
  }
  const double scale = exact ? 1.0 : 1.0 / static_cast<double>(points.size());
  report.k_cond = cond_sum.value() * scale;
  report.margin_kl = model.has_margin() ? margin_sum.value() * scale : kPosInf;
  report.k_joint = model.has_margin() ? joint_sum.value() * scale : kPosInf;
  if (report.infinite) {
    report.k_cond = kPosInf;
    report.k_joint = kPosInf;
  }
  report.identity_residual = report.k_joint - report.k_cond - report.margin_kl;
  if (!exact && points.size() >= 16) {
    report.k_cond_se = jackknife_se(detail::block_means(cond_terms, 16));
    report.k_joint_se = jackknife_se(detail::block_means(joint_terms, 16));
  }
  return report;
}

inline double k_cond(const ModelFamily& truth, std::span<const double> truth_theta, const ModelFamily& model,
                     std::span<const double> theta, const KlIntegration& integration = {}) {
  return kl_report(truth, truth_theta, model, theta, integration).k_cond;
}

inline double k_joint(const ModelFamily& truth, std::span<const double> truth_theta, const ModelFamily& model,
                      std::span<const double> theta, const KlIntegration& integration = {}) {
  if (!model.has_margin()) throw ConfigurationError(model.id() + ": no margin model; K_JOINT undefined");
  return kl_report(truth, truth_theta, model, theta, integration).k_joint;
}

// Posterior expectation of K_COND, estimated by averaging over draws
// (optionally weighted; weights are normalized).
inline double expected_k_cond(const ModelFamily& truth, std::span<const double> truth_theta, const ModelFamily& model,
                              const std::vector<std::vector<double>>& draws, const KlIntegration& integration = {},
                              std::span<const double> weights = {}) {
  if (draws.empty()) throw UsageError("expected_k_cond: no draws");
  if (!weights.empty() && weights.size() != draws.size()) throw UsageError("expected_k_cond: weight count mismatch");
  CompensatedSum sum;
  double total_weight = 0.0;
  for (std::size_t s = 0; s < draws.size(); ++s) {
    const double w = weights.empty() ? 1.0 : weights[s];
    const double k = k_cond(truth, truth_theta, model, draws[s], integration);
    if (k == kPosInf && w > 0.0) return kPosInf;
    sum.add(w * k);
    total_weight += w;
  }
  return sum.value() / total_weight;
}

inline double expected_k_cond(const ModelFamily& truth, std::span<const double> truth_theta, const ModelFamily& model,
                              const SampleSet& set, const KlIntegration& integration = {}) {
  return expected_k_cond(truth, truth_theta, model, set.pooled(), integration);
}

inline double clip_probability(double p) {
  static const double floor = std::exp(kLogProbabilityFloor);
  return std::clamp(p, floor, 1.0);
}

// Clip each entry to [e^-22, 1] and renormalize.
inline std::vector<double> clip_and_renormalize(std::span<const double> probs) {
  std::vector<double> out(probs.size());
  double total = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    out[c] = clip_probability(probs[c]);
    total += out[c];
  }
  for (double& p : out) p /= total;
  return out;
}

struct ClassProbabilities {
  std::vector<double> probs;  // clipped and renormalized
  std::vector<double> raw;    // plain Monte Carlo average before clipping
};

// p(c | x, D) = (1/S) sum_s p(c | x, theta_s).
inline ClassProbabilities predictive(const ModelFamily& model, const std::vector<std::vector<double>>& draws,
                                     FeatureView x, Rng* rng = nullptr) {
  if (draws.empty()) throw UsageError("predictive: empty sample set");
  Rng& r = rng ? *rng : detail::scratch_rng();
  const std::size_t C = static_cast<std::size_t>(model.num_classes());
  std::vector<double> acc(C, 0.0);
  std::vector<double> cond(C);
  for (const auto& theta : draws) {
    model.bind(theta)->log_conditionals(x, cond, r);
    for (std::size_t c = 0; c < C; ++c) acc[c] += std::exp(cond[c]);
  }
  for (double& v : acc) v /= static_cast<double>(draws.size());
  return {clip_and_renormalize(acc), acc};
}

// exp(-(1/N) sum_i ln p_i(c_i)) with each probability clipped to [e^-22, 1].
inline double perplexity(std::span<const int> labels, const std::vector<std::vector<double>>& probs) {
  if (labels.empty() || labels.size() != probs.size()) throw UsageError("perplexity: need aligned non-empty inputs");
  CompensatedSum sum;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = probs[i];
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= p.size()) throw UsageError("perplexity: label out of range");
    sum.add(-std::log(clip_probability(p[labels[i]])));
  }
  return std::exp(sum.value() / static_cast<double>(labels.size()));
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct PredictiveReport {
  std::vector<int> labels;
  std::vector<std::vector<double>> probs;  // clipped and renormalized
  std::vector<std::vector<double>> raw;
  std::vector<double> logloss;  // -ln p(c_i | x_i, D) after clipping
  double perplexity = 0.0;
  double mean_logloss = 0.0;
  std::optional<Interval> ci;
};

inline PredictiveReport predictive_report(const ModelFamily& model, const std::vector<std::vector<double>>& draws,
                                          const Dataset& test, Rng* rng = nullptr) {
  if (draws.empty()) throw UsageError("predictive: empty sample set");
  if (test.empty()) throw UsageError("predictive: empty test set");
  Rng& r = rng ? *rng : detail::scratch_rng();
  const std::size_t C = static_cast<std::size_t>(model.num_classes());
  const std::size_t N = test.size();
  std::vector<double> acc(N * C, 0.0);
  std::vector<double> cond(C);
  for (const auto& theta : draws) {
    auto bound = model.bind(theta);
    for (std::size_t i = 0; i < N; ++i) {
      bound->log_conditionals(test.observations[i].features, cond, r);
      for (std::size_t c = 0; c < C; ++c) acc[i * C + c] += std::exp(cond[c]);
    }
  }
  PredictiveReport report;
  const double inv = 1.0 / static_cast<double>(draws.size());
  CompensatedSum loss;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> raw(acc.begin() + i * C, acc.begin() + (i + 1) * C);
    for (double& v : raw) v *= inv;
    auto probs = clip_and_renormalize(raw);
    const int label = test.observations[i].label;
    report.labels.push_back(label);
    report.logloss.push_back(-std::log(clip_probability(probs[label])));
    loss.add(report.logloss.back());
    report.probs.push_back(std::move(probs));
    report.raw.push_back(std::move(raw));
  }
  report.mean_logloss = loss.value() / static_cast<double>(N);
  report.perplexity = perplexity(report.labels, report.probs);
  return report;
}

inline void write_predictive_csv(const PredictiveReport& report, std::ostream& out) {
  const std::size_t C = report.probs.empty() ? 0 : report.probs.front().size();
  out << "point_id,true_class";
  for (std::size_t c = 0; c < C; ++c) out << ",p_" << c;
  out << ",logloss\n";
  for (std::size_t i = 0; i < report.probs.size(); ++i) {
    out << i << ',' << report.labels[i];
    for (double p : report.probs[i]) out << ',' << detail::format_double(p);
    out << ',' << detail::format_double(report.logloss[i]) << '\n';
  }
}

inline void write_kl_report(const KlReport& r, std::ostream& out) {
  out << "k_joint=" << detail::format_double(r.k_joint) << '\n'
      << "k_cond=" << detail::format_double(r.k_cond) << '\n'
      << "margin_kl=" << detail::format_double(r.margin_kl) << '\n'
      << "identity_residual=" << detail::format_double(r.identity_residual) << '\n'
      << "infinite=" << (r.infinite ? "true" : "false") << '\n'
      << "k_cond_se=" << detail::format_double(r.k_cond_se) << '\n'
      << "k_joint_se=" << detail::format_double(r.k_joint_se) << '\n';
}

namespace detail {
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}
}  // namespace detail

// Percentile bootstrap interval for the mean of run-level values.
inline Interval bootstrap_ci(std::span<const double> values, double level = 0.95, std::uint64_t seed = 1,
                             std::size_t resamples = 10000) {
  if (values.size() < 2) throw UsageError("bootstrap_ci: need at least two runs");
  if (!(level > 0.0 && level < 1.0)) throw UsageError("bootstrap_ci: level must lie in (0, 1)");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  Interval out{detail::quantile_sorted(means, tail), detail::quantile_sorted(means, 1.0 - tail)};
  // resampled means of identical values can differ from v in the last ulp
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  out.lower = std::clamp(out.lower, *mn, *mx);
  out.upper = std::clamp(out.upper, *mn, *mx);
  return out;
}

}  // namespace dispost
