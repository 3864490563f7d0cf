#pragma once

#include <atomic>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dispost/model.hpp"

namespace dispost {

namespace detail {

// Nonzero (word, count) pairs of a bag-of-words feature vector.
inline std::vector<std::pair<std::size_t, double>> word_counts(FeatureView x, std::size_t vocab) {
  if (x.size() != vocab) throw UsageError("document model: feature vector length != vocabulary size");
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t w = 0; w < vocab; ++w) {
    if (!x[w]) throw ConfigurationError("document model: missing word counts are not supported");
    const double n = *x[w];
    if (n < 0.0 || n != std::floor(n)) throw UsageError("document model: counts must be nonnegative integers");
    if (n > 0.0) out.emplace_back(w, n);
  }
  return out;
}

inline std::vector<double> sample_simplex_free(std::size_t size, double concentration, Rng& rng) {
  std::vector<double> alpha(size, concentration);
  std::vector<double> p(size);
  sample_dirichlet(alpha, p, rng);
  for (double& v : p) v = std::max(v, 1e-300);
  std::vector<double> free(size - 1);
  simplex_to_free(p, free);
  return free;
}

inline std::vector<Feature> multinomial_counts(std::span<const double> probs, std::size_t words, Rng& rng) {
  std::vector<Feature> x(probs.size(), 0.0);
  if (words == 0) return x;
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  for (std::size_t n = 0; n < words; ++n) *x[pick(rng)] += 1.0;
  return x;
}

}  // namespace detail

struct MixtureOfUnigramsSpec {
  std::size_t vocab = 25;
  int classes = 4;  // one topic per class
  double beta_concentration = 25.0;
  double pi_concentration = 1.0;
  std::size_t words_per_doc = 50;  // used by simulate()
};

// Mixture of unigrams with one multinomial word distribution per class.
// log p(c, x | theta) = log pi(c) + sum_w x_w log beta_{c,w}; the multinomial
// coefficient is omitted since it does not depend on theta.
class MixtureOfUnigrams final : public ModelFamily {
 public:
  explicit MixtureOfUnigrams(MixtureOfUnigramsSpec spec) : spec_(spec) {
    if (spec_.vocab < 2) throw UsageError("mum: vocabulary must have at least two words");
    if (spec_.classes < 1) throw UsageError("mum: need at least one class");
    if (spec_.classes >= 2) layout_.add("pi", BlockKind::Simplex, spec_.classes);
    for (int c = 0; c < spec_.classes; ++c) layout_.add("beta_" + std::to_string(c), BlockKind::Simplex, spec_.vocab);
  }

  const MixtureOfUnigramsSpec& spec() const { return spec_; }

  std::string id() const override { return "mum"; }
  int num_classes() const override { return spec_.classes; }
  std::size_t feature_dim() const override { return spec_.vocab; }
  const ParameterLayout& layout() const override { return layout_; }

  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    const Params p = unpack(theta);
    double out = 0.0;
    if (spec_.classes >= 2) out += log_dirichlet_unconstrained(p.log_pi, spec_.pi_concentration);
    for (int c = 0; c < spec_.classes; ++c) {
      out += log_dirichlet_unconstrained(std::span<const double>(p.log_beta).subspan(c * spec_.vocab, spec_.vocab),
                                         spec_.beta_concentration);
    }
    return out;
  }

  std::vector<double> sample_prior(Rng& rng) const override {
    std::vector<double> theta;
    if (spec_.classes >= 2) {
      auto pi = detail::sample_simplex_free(spec_.classes, spec_.pi_concentration, rng);
      theta.insert(theta.end(), pi.begin(), pi.end());
    }
    for (int c = 0; c < spec_.classes; ++c) {
      auto beta = detail::sample_simplex_free(spec_.vocab, spec_.beta_concentration, rng);
      theta.insert(theta.end(), beta.begin(), beta.end());
    }
    return theta;
  }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    check_dim(theta);
    return std::make_unique<Bound>(spec_, unpack(theta));
  }

  Dataset simulate(std::span<const double> theta, std::size_t n, Rng& rng) const override {
    return simulate_corpus(theta, n, spec_.words_per_doc, rng);
  }

  // Documents drawn as class ~ pi, counts ~ Multinomial(words_per_doc, beta_class).
  Dataset simulate_corpus(std::span<const double> theta, std::size_t n_docs, std::size_t words_per_doc,
                          Rng& rng) const {
    check_dim(theta);
    const auto params = to_constrained(layout_, theta);
    const std::size_t beta_offset = spec_.classes >= 2 ? 1 : 0;
    std::vector<double> pi = spec_.classes >= 2 ? params[0] : std::vector<double>{1.0};
    std::discrete_distribution<int> pick_class(pi.begin(), pi.end());
    Dataset out(spec_.classes, spec_.vocab);
    out.observations.reserve(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
      const int c = pick_class(rng);
      out.add(c, detail::multinomial_counts(params[beta_offset + c], words_per_doc, rng));
    }
    return out;
  }

 private:
  struct Params {
    std::vector<double> log_pi;    // C
    std::vector<double> log_beta;  // C x W, row-major
  };

  Params unpack(std::span<const double> theta) const {
    Params p;
    const std::size_t C = spec_.classes;
    const std::size_t W = spec_.vocab;
    std::size_t offset = 0;
    p.log_pi.assign(C, 0.0);
    if (C >= 2) {
      log_softmax_pinned(theta.subspan(0, C - 1), p.log_pi);
      offset = C - 1;
    }
    p.log_beta.resize(C * W);
    for (std::size_t c = 0; c < C; ++c) {
      log_softmax_pinned(theta.subspan(offset, W - 1), std::span<double>(p.log_beta).subspan(c * W, W));
      offset += W - 1;
    }
    return p;
  }

  class Bound final : public BoundModel {
   public:
    Bound(const MixtureOfUnigramsSpec& spec, Params params)
        : BoundModel(spec.classes), vocab_(spec.vocab), params_(std::move(params)) {}

    double log_joint(int c, FeatureView x, Rng&) const override {
      const auto counts = detail::word_counts(x, vocab_);
      return class_term(c, counts);
    }

    void class_log_joints(FeatureView x, std::span<double> out, Rng&) const override {
      const auto counts = detail::word_counts(x, vocab_);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] = class_term(static_cast<int>(c), counts);
    }

   private:
    double class_term(int c, const std::vector<std::pair<std::size_t, double>>& counts) const {
      const double* log_beta = params_.log_beta.data() + static_cast<std::size_t>(c) * vocab_;
      double out = params_.log_pi[c];
      for (const auto& [w, n] : counts) out += n * log_beta[w];
      return out;
    }

    std::size_t vocab_;
    Params params_;
  };

  MixtureOfUnigramsSpec spec_;
  ParameterLayout layout_;
};

// Monte Carlo integration controls for the mixture-of-LDA document likelihood.
struct McSettings {
  std::size_t batch = 256;
  std::size_t max_draws = 65536;
  std::size_t blocks = 16;
  std::size_t min_draws = 256;
  double rel_se_target = 0.05;  // stop when jackknife SE < 5% of the integral
};

struct McEstimate {
  double log_value = 0.0;
  double log_se = 0.0;  // jackknife SE of the integral divided by its value
  std::size_t draws = 0;
  bool converged = true;  // false when max_draws was hit first
};

struct MixtureLdaSpec {
  std::size_t vocab = 25;
  std::size_t topics = 4;
  int classes = 4;
  double beta_concentration = 2.0;
  double alpha_concentration = 1.0;
  double class_concentration = 50.0;
  std::size_t words_per_doc = 50;  // used by simulate()
  McSettings mc;
};

// Mixture of LDA models: the class c selects a row alpha(c) of Dirichlet
// parameters for the per-document topic proportions; words are then drawn as
// in ordinary LDA. Rows of alpha are parameterized on the simplex.
//
// Parameter blocks: pi_class (C), alpha_c (T each, C rows), beta_t (W each, T rows).
class MixtureLda final : public ModelFamily {
 public:
  explicit MixtureLda(MixtureLdaSpec spec) : spec_(spec) {
    if (spec_.vocab < 2) throw UsageError("mlda: vocabulary must have at least two words");
    if (spec_.topics < 1 || spec_.classes < 1) throw UsageError("mlda: need at least one topic and class");
    if (spec_.mc.batch == 0 || spec_.mc.blocks < 2 || spec_.mc.batch % spec_.mc.blocks != 0) {
      throw UsageError("mlda: batch must be a positive multiple of blocks (>= 2)");
    }
    if (spec_.mc.batch < 2) throw UsageError("mlda: need at least two Monte Carlo draws");
    if (spec_.classes >= 2) layout_.add("pi_class", BlockKind::Simplex, spec_.classes);
    if (spec_.topics >= 2) {
      for (int c = 0; c < spec_.classes; ++c) layout_.add("alpha_" + std::to_string(c), BlockKind::Simplex, spec_.topics);
    }
    for (std::size_t t = 0; t < spec_.topics; ++t) layout_.add("beta_" + std::to_string(t), BlockKind::Simplex, spec_.vocab);
  }

  const MixtureLdaSpec& spec() const { return spec_; }

  std::string id() const override { return "mlda"; }
  int num_classes() const override { return spec_.classes; }
  std::size_t feature_dim() const override { return spec_.vocab; }
  const ParameterLayout& layout() const override { return layout_; }

  // Evaluations that stopped at max_draws without meeting the SE target.
  std::size_t capped_evaluations() const { return capped_.load(); }

  double log_prior(std::span<const double> theta) const override {
    check_dim(theta);
    const Params p = unpack(theta);
    double out = 0.0;
    if (spec_.classes >= 2) out += log_dirichlet_unconstrained(p.log_pi_class, spec_.class_concentration);
    if (spec_.topics >= 2) {
      for (int c = 0; c < spec_.classes; ++c) {
        std::vector<double> log_alpha(spec_.topics);
        for (std::size_t t = 0; t < spec_.topics; ++t) log_alpha[t] = std::log(p.alpha[c * spec_.topics + t]);
        out += log_dirichlet_unconstrained(log_alpha, spec_.alpha_concentration);
      }
    }
    for (std::size_t t = 0; t < spec_.topics; ++t) {
      std::vector<double> log_beta(spec_.vocab);
      for (std::size_t w = 0; w < spec_.vocab; ++w) log_beta[w] = std::log(p.beta[t * spec_.vocab + w]);
      out += log_dirichlet_unconstrained(log_beta, spec_.beta_concentration);
    }
    return out;
  }

  std::vector<double> sample_prior(Rng& rng) const override {
    std::vector<double> theta;
    auto append = [&](std::vector<double> v) { theta.insert(theta.end(), v.begin(), v.end()); };
    if (spec_.classes >= 2) append(detail::sample_simplex_free(spec_.classes, spec_.class_concentration, rng));
    if (spec_.topics >= 2) {
      for (int c = 0; c < spec_.classes; ++c) append(detail::sample_simplex_free(spec_.topics, spec_.alpha_concentration, rng));
    }
    for (std::size_t t = 0; t < spec_.topics; ++t) append(detail::sample_simplex_free(spec_.vocab, spec_.beta_concentration, rng));
    return theta;
  }

  std::unique_ptr<BoundModel> bind(std::span<const double> theta) const override {
    check_dim(theta);
    return std::make_unique<Bound>(*this, unpack(theta));
  }

  // Monte Carlo estimate of log p(c, x | theta) with its jackknife error.
  McEstimate estimate_log_joint(std::span<const double> theta, int c, FeatureView x, Rng& rng) const {
    check_dim(theta);
    return estimate(unpack(theta), c, x, rng);
  }

  Dataset simulate(std::span<const double> theta, std::size_t n, Rng& rng) const override {
    return simulate_corpus(theta, n, spec_.words_per_doc, rng);
  }

  Dataset simulate_corpus(std::span<const double> theta, std::size_t n_docs, std::size_t words_per_doc,
                          Rng& rng) const {
    check_dim(theta);
    const Params p = unpack(theta);
    std::vector<double> pi_class(spec_.classes);
    for (int c = 0; c < spec_.classes; ++c) pi_class[c] = std::exp(p.log_pi_class[c]);
    std::discrete_distribution<int> pick_class(pi_class.begin(), pi_class.end());
    Dataset out(spec_.classes, spec_.vocab);
    out.observations.reserve(n_docs);
    std::vector<double> topic_probs(spec_.topics);
    std::vector<double> word_probs(spec_.vocab);
    for (std::size_t i = 0; i < n_docs; ++i) {
      const int c = pick_class(rng);
      sample_dirichlet(std::span<const double>(p.alpha).subspan(c * spec_.topics, spec_.topics), topic_probs, rng);
      std::fill(word_probs.begin(), word_probs.end(), 0.0);
      for (std::size_t t = 0; t < spec_.topics; ++t) {
        for (std::size_t w = 0; w < spec_.vocab; ++w) word_probs[w] += topic_probs[t] * p.beta[t * spec_.vocab + w];
      }
      out.add(c, detail::multinomial_counts(word_probs, words_per_doc, rng));
    }
    return out;
  }

 private:
  struct Params {
    std::vector<double> log_pi_class;  // C
    std::vector<double> alpha;         // C x T
    std::vector<double> beta;          // T x W
  };

  Params unpack(std::span<const double> theta) const {
    const std::size_t C = spec_.classes;
    const std::size_t T = spec_.topics;
    const std::size_t W = spec_.vocab;
    Params p;
    std::size_t offset = 0;
    p.log_pi_class.assign(C, 0.0);
    if (C >= 2) {
      log_softmax_pinned(theta.subspan(0, C - 1), p.log_pi_class);
      offset += C - 1;
    }
    p.alpha.assign(C * T, 1.0);
    if (T >= 2) {
      for (std::size_t c = 0; c < C; ++c) {
        softmax_pinned(theta.subspan(offset, T - 1), std::span<double>(p.alpha).subspan(c * T, T));
        offset += T - 1;
      }
    }
    p.beta.resize(T * W);
    for (std::size_t t = 0; t < T; ++t) {
      softmax_pinned(theta.subspan(offset, W - 1), std::span<double>(p.beta).subspan(t * W, W));
      offset += W - 1;
    }
    for (double& a : p.alpha) a = std::max(a, 1e-300);
    return p;
  }

  // ln pi_c(c) + ln[(1/S) sum_s prod_n sum_z pi_s(z) beta(z, w_n)],
  // pi_s ~ Dirichlet(alpha(c)). The per-word mixture sum_z pi(z) beta(z, w)
  // is formed directly: pi sums to one and beta > 0, so it cannot underflow.
  McEstimate estimate(const Params& p, int c, FeatureView x, Rng& rng) const {
    const std::size_t T = spec_.topics;
    const std::size_t W = spec_.vocab;
    const auto counts = detail::word_counts(x, W);
    const double log_class = p.log_pi_class[c];
    if (counts.empty()) return {log_class, 0.0, 0, true};
    if (T == 1) {
      double out = log_class;
      for (const auto& [w, n] : counts) out += n * std::log(p.beta[w]);
      return {out, 0.0, 0, true};
    }

    // beta columns for the words present, topic-minor for locality
    std::vector<double> beta_cols(counts.size() * T);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      for (std::size_t t = 0; t < T; ++t) beta_cols[i * T + t] = p.beta[t * W + counts[i].first];
    }
    const auto alpha = std::span<const double>(p.alpha).subspan(static_cast<std::size_t>(c) * T, T);

    const McSettings& mc = spec_.mc;
    std::vector<double> block_sum(mc.blocks, 0.0);  // sums of exp(L - shift)
    double shift = kNegInf;
    std::vector<double> topic(T);
    std::size_t draws = 0;
    double rel_se = kPosInf;
    double mean = 0.0;
    while (true) {
      for (std::size_t s = 0; s < mc.batch; ++s, ++draws) {
        sample_dirichlet(alpha, topic, rng);
        double log_prod = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
          double mix = 0.0;
          for (std::size_t t = 0; t < T; ++t) mix += topic[t] * beta_cols[i * T + t];
          log_prod += counts[i].second * std::log(mix);
        }
        if (log_prod > shift) {
          const double scale = shift == kNegInf ? 0.0 : std::exp(shift - log_prod);
          for (double& b : block_sum) b *= scale;
          shift = log_prod;
        }
        block_sum[draws % mc.blocks] += std::exp(log_prod - shift);
      }
      const double per_block = static_cast<double>(draws / mc.blocks);
      std::vector<double> block_means(mc.blocks);
      double total = 0.0;
      for (std::size_t b = 0; b < mc.blocks; ++b) {
        block_means[b] = block_sum[b] / per_block;
        total += block_means[b];
      }
      mean = total / static_cast<double>(mc.blocks);
      rel_se = jackknife_se(block_means) / mean;
      if (draws >= mc.min_draws && rel_se < mc.rel_se_target) break;
      if (draws >= mc.max_draws) break;
    }
    const bool converged = rel_se < mc.rel_se_target;
    if (!converged) capped_.fetch_add(1, std::memory_order_relaxed);
    return {log_class + shift + std::log(mean), rel_se, draws, converged};
  }

  class Bound final : public BoundModel {
   public:
    Bound(const MixtureLda& family, Params params)
        : BoundModel(family.spec_.classes), family_(family), params_(std::move(params)) {}

    double log_joint(int c, FeatureView x, Rng& rng) const override {
      return family_.estimate(params_, c, x, rng).log_value;
    }

   private:
    const MixtureLda& family_;
    Params params_;
  };

  MixtureLdaSpec spec_;
  ParameterLayout layout_;
  mutable std::atomic<std::size_t> capped_{0};
};

}  // namespace dispost
