#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dispost/errors.hpp"
#include "dispost/model.hpp"
#include "dispost/numeric.hpp"

namespace dispost {

enum class PosteriorKind { Joint, Discriminative, Regression };

inline std::string to_string(PosteriorKind kind) {
  switch (kind) {
    case PosteriorKind::Joint: return "joint";
    case PosteriorKind::Discriminative: return "disc";
    case PosteriorKind::Regression: return "reg";
  }
  return "?";
}

inline PosteriorKind parse_posterior_kind(const std::string& s) {
  if (s == "joint") return PosteriorKind::Joint;
  if (s == "disc" || s == "discriminative") return PosteriorKind::Discriminative;
  if (s == "reg" || s == "regression") return PosteriorKind::Regression;
  throw UsageError("unknown posterior kind '" + s + "' (expected joint|disc|reg)");
}

// Anything the Metropolis-Hastings machinery can sample: an unnormalized log
// density over R^dim plus a way to draw starting points.
template <class T>
concept LogTarget = requires(const T& t, std::span<const double> x, Rng& rng) {
  { t.dim() } -> std::convertible_to<std::size_t>;
  { t.log_density(x, rng) } -> std::convertible_to<double>;
  { t.initial(rng) } -> std::convertible_to<std::vector<double>>;
};

// Unnormalized posterior over a family's parameters given a dataset.
//   Joint:          log p(theta) + sum_i log p(c_i, x_i | theta)
//   Discriminative: log p(theta) + sum_i log p(c_i | x_i, theta)
//   Regression:     as Discriminative, for conditional-only families
// Missing components are marginalized out of joint and discriminative terms.
class PosteriorTarget {
 public:
  PosteriorTarget(PosteriorKind kind, const ModelFamily& model, const Dataset& data)
      : kind_(kind), model_(&model), data_(&data) {
    if (data.num_classes != model.num_classes() || data.feature_dim != model.feature_dim()) {
      throw UsageError("posterior target: dataset shape does not match model " + model.id());
    }
    const bool missing = data.has_missing();
    switch (kind_) {
      case PosteriorKind::Joint:
      case PosteriorKind::Discriminative:
        if (!model.has_margin()) {
          throw ConfigurationError(model.id() + ": no margin model; only the regression posterior is available");
        }
        if (missing && !model.supports_missing()) {
          throw ConfigurationError(model.id() + ": cannot marginalize missing features");
        }
        break;
      case PosteriorKind::Regression:
        if (missing) throw ConfigurationError("regression posterior: dataset has missing features; impute first");
        break;
    }
  }

  PosteriorKind kind() const { return kind_; }
  const ModelFamily& model() const { return *model_; }
  const Dataset& dataset() const { return *data_; }

  std::size_t dim() const { return model_->unconstrained_dim(); }
  std::vector<double> initial(Rng& rng) const { return model_->sample_prior(rng); }

  double log_density(std::span<const double> theta, Rng& rng) const {
    for (double v : theta) {
      if (!std::isfinite(v)) throw UsageError("target_log_density: non-finite parameter");
    }
    const double prior = model_->log_prior(theta);
    if (prior == kNegInf) return kNegInf;
    auto bound = model_->bind(theta);
    if (!bound->in_support()) return kNegInf;

    CompensatedSum sum;
    sum.add(prior);
    const auto& obs = data_->observations;
    if (kind_ == PosteriorKind::Joint) {
      for (const auto& o : obs) sum.add(bound->log_joint(o.label, o.features, rng));
      return sum.value();
    }
    std::vector<double> cond(model_->num_classes());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      try {
        bound->log_conditionals(obs[i].features, cond, rng);
      } catch (const EvaluationError& e) {
        throw EvaluationError("observation " + std::to_string(i) + ": " + e.what());
      }
      sum.add(cond[obs[i].label]);
    }
    return sum.value();
  }

 private:
  PosteriorKind kind_;
  const ModelFamily* model_;
  const Dataset* data_;
};

inline double target_log_density(const PosteriorTarget& target, std::span<const double> theta, Rng* rng = nullptr) {
  return target.log_density(theta, rng ? *rng : detail::scratch_rng());
}

struct ChainConfig {
  std::size_t n_chains = 3;
  std::size_t burn_in = 500;
  std::size_t thinning = 5;
  std::size_t n_keep = 900;
  double kernel_width = 0.1;
  bool adapt = true;
  std::uint64_t seed = 1;
  bool parallel = false;

  // Burn-in adaptation: every adapt_interval steps the acceptance over the
  // trailing adapt_window proposals is compared with [accept_low, accept_high].
  std::size_t adapt_window = 100;
  std::size_t adapt_interval = 25;
  double accept_low = 0.2;
  double accept_high = 0.4;
  std::size_t max_init_attempts = 100;

  void validate() const {
    if (n_chains < 1 || thinning < 1 || n_keep < 1) throw UsageError("chain config: counts must be >= 1");
    if (!(kernel_width > 0.0)) throw UsageError("chain config: kernel_width must be > 0");
    if (adapt_window < 1 || adapt_interval < 1) throw UsageError("chain config: adaptation window must be >= 1");
  }
};

struct ChainResult {
  std::vector<double> draws;  // n_keep x dim, row-major
  double acceptance_rate = 0.0;  // post-burn-in
  double burn_in_acceptance = 0.0;
  double final_width = 0.0;
  std::size_t init_attempts = 0;
};

struct SampleSet {
  std::size_t dim = 0;
  std::string family_id;
  ChainConfig config;
  std::vector<ChainResult> chains;
  std::vector<double> rhat;  // split R-hat per coordinate (empty if undefined)
  bool rhat_flag = false;    // any coordinate above 1.1

  std::size_t draws_per_chain() const { return chains.empty() || dim == 0 ? 0 : chains.front().draws.size() / dim; }
  std::size_t total_draws() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += dim == 0 ? 0 : c.draws.size() / dim;
    return n;
  }
  std::span<const double> draw(std::size_t chain, std::size_t i) const {
    return std::span<const double>(chains[chain].draws).subspan(i * dim, dim);
  }
  // All draws, chain-major.
  std::vector<std::vector<double>> pooled() const {
    std::vector<std::vector<double>> out;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const std::size_t n = dim == 0 ? 0 : chains[c].draws.size() / dim;
      for (std::size_t i = 0; i < n; ++i) {
        auto d = draw(c, i);
        out.emplace_back(d.begin(), d.end());
      }
    }
    return out;
  }
  double mean_acceptance() const {
    double s = 0.0;
    for (const auto& c : chains) s += c.acceptance_rate;
    return chains.empty() ? 0.0 : s / static_cast<double>(chains.size());
  }
};

struct MhState {
  std::vector<double> theta;
  double log_density = kNegInf;
};

// One random-walk Metropolis step with proposal theta + N(0, width^2 I).
// Returns true when the proposal was accepted.
template <LogTarget Target>
bool mh_step(const Target& target, MhState& state, double width, Rng& rng) {
  if (!(width > 0.0)) throw UsageError("mh_step: width must be > 0");
  if (state.log_density == kNegInf || std::isnan(state.log_density)) {
    throw InitializationError("mh_step: current state has zero density");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> proposal(state.theta.size());
  for (std::size_t j = 0; j < proposal.size(); ++j) proposal[j] = state.theta[j] + width * normal(rng);
  const double proposed = target.log_density(proposal, rng);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  if (proposed == kNegInf || std::isnan(proposed)) return false;
  if (proposed >= state.log_density || std::log(u) < proposed - state.log_density) {
    state.theta = std::move(proposal);
    state.log_density = proposed;
    return true;
  }
  return false;
}

template <LogTarget Target>
MhState initialize_chain(const Target& target, const ChainConfig& config, Rng& rng, std::size_t& attempts,
                         const std::vector<double>* start = nullptr) {
  MhState state;
  if (start) {
    attempts = 1;
    state.theta = *start;
    state.log_density = target.log_density(state.theta, rng);
    if (!std::isfinite(state.log_density)) throw InitializationError("supplied starting point has zero density");
    return state;
  }
  for (attempts = 1; attempts <= config.max_init_attempts; ++attempts) {
    state.theta = target.initial(rng);
    state.log_density = target.log_density(state.theta, rng);
    if (std::isfinite(state.log_density)) return state;
  }
  throw InitializationError("no finite-density starting point in " + std::to_string(config.max_init_attempts) +
                            " prior draws");
}

// Single chain: adaptive burn-in (width frozen afterwards), then every
// thinning-th state is kept until n_keep draws.
template <LogTarget Target>
ChainResult run_chain(const Target& target, const ChainConfig& config, Rng& rng,
                      const std::vector<double>* start = nullptr) {
  config.validate();
  ChainResult out;
  MhState state = initialize_chain(target, config, rng, out.init_attempts, start);
  const std::size_t dim = state.theta.size();

  double width = config.kernel_width;
  std::deque<bool> window;
  std::size_t window_accepts = 0;
  std::size_t burn_accepts = 0;
  for (std::size_t it = 0; it < config.burn_in; ++it) {
    const bool accepted = mh_step(target, state, width, rng);
    burn_accepts += accepted;
    if (!config.adapt) continue;
    window.push_back(accepted);
    window_accepts += accepted;
    if (window.size() > config.adapt_window) {
      window_accepts -= window.front();
      window.pop_front();
    }
    if ((it + 1) % config.adapt_interval == 0 && window.size() >= std::min(config.adapt_window, config.adapt_interval)) {
      const double rate = static_cast<double>(window_accepts) / static_cast<double>(window.size());
      if (rate > config.accept_high) width *= 1.1;
      else if (rate < config.accept_low) width *= 0.9;
    }
  }
  out.burn_in_acceptance = config.burn_in ? static_cast<double>(burn_accepts) / static_cast<double>(config.burn_in) : 0.0;
  out.final_width = width;

  out.draws.reserve(config.n_keep * dim);
  std::size_t accepts = 0;
  const std::size_t steps = config.n_keep * config.thinning;
  for (std::size_t it = 1; it <= steps; ++it) {
    accepts += mh_step(target, state, width, rng);
    if (it % config.thinning == 0) out.draws.insert(out.draws.end(), state.theta.begin(), state.theta.end());
  }
  out.acceptance_rate = static_cast<double>(accepts) / static_cast<double>(steps);
  return out;
}

// Split R-hat per coordinate over every chain half.
inline std::vector<double> split_rhat(const SampleSet& set) {
  const std::size_t n = set.draws_per_chain() / 2;
  if (set.dim == 0 || n < 2) return {};
  std::vector<double> out(set.dim);
  const std::size_t m = set.chains.size() * 2;
  for (std::size_t j = 0; j < set.dim; ++j) {
    std::vector<double> means;
    std::vector<double> vars;
    for (std::size_t c = 0; c < set.chains.size(); ++c) {
      for (std::size_t half = 0; half < 2; ++half) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += set.draw(c, half * n + i)[j];
        const double mean = s / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = set.draw(c, half * n + i)[j] - mean;
          ss += d * d;
        }
        means.push_back(mean);
        vars.push_back(ss / static_cast<double>(n - 1));
      }
    }
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= static_cast<double>(m);
    double between = 0.0;
    for (double v : means) between += (v - grand) * (v - grand);
    between *= static_cast<double>(n) / static_cast<double>(m - 1);
    double within = 0.0;
    for (double v : vars) within += v;
    within /= static_cast<double>(m);
    if (within <= 0.0) {
      out[j] = between > 0.0 ? kPosInf : 1.0;
      continue;
    }
    const double var_plus = (static_cast<double>(n - 1) / static_cast<double>(n)) * within + between / static_cast<double>(n);
    out[j] = std::sqrt(var_plus / within);
  }
  return out;
}

inline constexpr double kRhatThreshold = 1.1;

// Independent chains from sub-seeds of config.seed. Optional per-chain
// starting points override the prior-draw initialization.
template <LogTarget Target>
SampleSet run_chains(const Target& target, const ChainConfig& config, std::string family_id = {},
                     const std::vector<std::vector<double>>* starts = nullptr) {
  config.validate();
  if (starts && starts->size() != config.n_chains) throw UsageError("run_chains: need one start per chain");
  SampleSet set;
  set.dim = target.dim();
  set.family_id = std::move(family_id);
  set.config = config;
  set.chains.resize(config.n_chains);
  std::vector<std::string> errors(config.n_chains);

  auto work = [&](std::size_t c) {
    try {
      Rng rng(derive_seed(config.seed, {c}));
      set.chains[c] = run_chain(target, config, rng, starts ? &(*starts)[c] : nullptr);
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  };
  if (config.parallel && config.n_chains > 1) {
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < config.n_chains; ++c) pool.emplace_back(work, c);
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t c = 0; c < config.n_chains; ++c) work(c);
  }
  for (std::size_t c = 0; c < errors.size(); ++c) {
    if (!errors[c].empty()) throw EvaluationError("chain " + std::to_string(c) + ": " + errors[c]);
  }
  set.rhat = split_rhat(set);
  set.rhat_flag = std::any_of(set.rhat.begin(), set.rhat.end(), [](double r) { return !(r <= kRhatThreshold); });
  return set;
}

inline SampleSet run_chains(const PosteriorTarget& target, const ChainConfig& config) {
  return run_chains(target, config, target.model().id());
}

struct CmlOptions {
  std::size_t max_sweeps = 300;
  double initial_step = 0.5;
  double min_step = 1e-6;
};

struct CmlResult {
  ParameterPoint point;
  double objective = kNegInf;  // sum_i log p(c_i | x_i, theta), no prior term
};

inline double conditional_log_likelihood(const ModelFamily& model, const Dataset& data, std::span<const double> theta,
                                         Rng& rng) {
  auto bound = model.bind(theta);
  if (!bound->in_support()) return kNegInf;
  CompensatedSum sum;
  std::vector<double> cond(model.num_classes());
  for (const auto& o : data.observations) {
    bound->log_conditionals(o.features, cond, rng);
    sum.add(cond[o.label]);
  }
  return sum.value();
}

// Maximum conditional likelihood by coordinate-wise adaptive-step hill
// climbing from `restarts` prior draws; the best local optimum is returned.
inline CmlResult conditional_ml_estimate(const PosteriorTarget& target, std::size_t restarts, Rng& rng,
                                         const CmlOptions& options = {}) {
  if (target.dataset().empty()) throw UsageError("conditional_ml_estimate: empty dataset");
  if (restarts < 1) throw UsageError("conditional_ml_estimate: restarts must be >= 1");
  const auto& model = target.model();
  const auto& data = target.dataset();
  // Monte Carlo likelihoods are evaluated with a fixed stream per restart
  // (common random numbers) so hill climbing sees a deterministic objective.
  std::uint64_t eval_seed = 0;
  auto objective = [&](std::span<const double> theta) {
    Rng eval_rng(eval_seed);
    try {
      return conditional_log_likelihood(model, data, theta, eval_rng);
    } catch (const EvaluationError&) {
      return kNegInf;
    }
  };

  CmlResult best;
  best.point.family_id = model.id();
  for (std::size_t r = 0; r < restarts; ++r) {
    eval_seed = rng();
    std::vector<double> theta;
    double value = kNegInf;
    for (std::size_t attempt = 0; attempt < 100 && value == kNegInf; ++attempt) {
      theta = model.sample_prior(rng);
      value = objective(theta);
    }
    if (value == kNegInf) continue;
    std::vector<double> step(theta.size(), options.initial_step);
    for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double original = theta[j];
        bool improved = false;
        for (double dir : {1.0, -1.0}) {
          theta[j] = original + dir * step[j];
          const double v = objective(theta);
          if (v > value) {
            value = v;
            improved = true;
            break;
          }
        }
        if (improved) {
          step[j] *= 2.0;
        } else {
          theta[j] = original;
          step[j] *= 0.5;
        }
      }
      if (step.empty() || *std::max_element(step.begin(), step.end()) < options.min_step) break;
    }
    if (value > best.objective) {
      best.objective = value;
      best.point.values = theta;
    }
  }
  if (best.point.values.empty()) throw InitializationError("conditional_ml_estimate: no finite starting point");
  return best;
}

}  // namespace dispost
