#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dispost/evaluation.hpp"
#include "dispost/harness/config.hpp"
#include "dispost/harness/data_io.hpp"
#include "dispost/missing.hpp"
#include "dispost/models.hpp"
#include "dispost/sampler.hpp"

namespace dispost::harness {

enum class Method { JointMcmc, DiscMcmc, BayesReg, Cml };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::JointMcmc: return "jMCMC";
    case Method::DiscMcmc: return "dMCMC";
    case Method::BayesReg: return "BayesReg";
    case Method::Cml: return "CML";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "jMCMC") return Method::JointMcmc;
  if (s == "dMCMC") return Method::DiscMcmc;
  if (s == "BayesReg") return Method::BayesReg;
  if (s == "CML") return Method::Cml;
  throw UsageError("unknown method '" + s + "'");
}

struct GridExperimentConfig {
  std::vector<std::size_t> n_train{32, 64, 128, 256, 512, 1024};
  std::vector<double> k{0.0, 1.0, 2.0};
  std::size_t test_size = 10000;
  std::vector<Method> methods{Method::JointMcmc, Method::DiscMcmc, Method::BayesReg};
  std::size_t repeats = 10;
  double missing_rate = 0.0;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  ChainConfig chain{};                                     // jMCMC and dMCMC
  ChainConfig regression = [] { ChainConfig c; c.burn_in = 5500; return c; }();
  TrueToySpec truth{};

  void validate() const {
    if (n_train.empty() || k.empty() || methods.empty()) throw UsageError("toy grid: lists must be non-empty");
    if (repeats < 1) throw UsageError("toy grid: repeats must be >= 1");
    if (test_size < 1) throw UsageError("toy grid: test_size must be >= 1");
    for (auto n : n_train) {
      if (n < 1) throw UsageError("toy grid: training sizes must be >= 1");
    }
    for (double v : k) {
      if (v < 0.0) throw UsageError("toy grid: k must be >= 0");
    }
    for (auto m : methods) {
      if (m == Method::Cml) throw UsageError("toy grid: CML is only available in the document study");
    }
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw UsageError("toy grid: missing_rate must lie in [0, 1)");
    chain.validate();
    regression.validate();
  }

  static GridExperimentConfig from(const Config& c) {
    GridExperimentConfig g;
    g.n_train = c.get_size_list("n_train", g.n_train);
    g.k = c.get_double_list("k", g.k);
    g.test_size = c.get_uint("test_size", g.test_size);
    if (c.has("methods")) {
      g.methods.clear();
      for (const auto& m : c.get_list("methods", {})) g.methods.push_back(parse_method(m));
    }
    g.repeats = c.get_uint("repeats", g.repeats);
    g.missing_rate = c.get_double("missing_rate", g.missing_rate);
    g.seed = master_seed(c, g.seed);
    g.workers = c.get_uint("workers", g.workers);
    g.chain = read_chain_config(c, "chain.", g.chain);
    g.regression = read_chain_config(c, "reg.", g.regression);
    g.validate();
    return g;
  }
};

struct GridRow {
  std::size_t n_train = 0;
  double k = 0.0;
  Method method = Method::DiscMcmc;
  std::size_t repeat = 0;
  double perplexity = std::nan("");
  double acceptance = std::nan("");
  double rhat_max = std::nan("");
  bool rhat_flag = false;
  std::uint64_t test_hash = 0;
  std::string status = "ok";
};

struct GridResult {
  std::vector<GridRow> rows;  // ordered by (n_train, k, method, repeat)
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const GridRow& r) { return r.status != "ok"; }));
  }
};

namespace detail {

inline double max_rhat(const SampleSet& set) {
  if (set.rhat.empty()) return std::nan("");
  return *std::max_element(set.rhat.begin(), set.rhat.end());
}

inline std::string csv_safe(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

// Regression chains, one per imputed training set when the data has gaps.
inline SampleSet regression_samples(const LogisticRegression& reg, const std::vector<Dataset>& train_sets,
                                    const ChainConfig& config) {
  SampleSet set;
  set.dim = reg.unconstrained_dim();
  set.family_id = reg.id();
  set.config = config;
  set.chains.resize(config.n_chains);
  for (std::size_t c = 0; c < config.n_chains; ++c) {
    const Dataset& data = train_sets[train_sets.size() == 1 ? 0 : c];
    PosteriorTarget target(PosteriorKind::Regression, reg, data);
    Rng rng(derive_seed(config.seed, {c}));
    set.chains[c] = run_chain(target, config, rng);
  }
  if (train_sets.size() == 1) {
    set.rhat = split_rhat(set);
  } else {
    // Chains target different imputed datasets, so cross-chain R-hat would
    // measure the spread between imputations. Use each chain's own halves.
    for (const auto& chain : set.chains) {
      SampleSet one;
      one.dim = set.dim;
      one.chains = {chain};
      const auto r = split_rhat(one);
      if (set.rhat.empty()) set.rhat = r;
      for (std::size_t j = 0; j < r.size(); ++j) set.rhat[j] = std::max(set.rhat[j], r[j]);
    }
  }
  set.rhat_flag = std::any_of(set.rhat.begin(), set.rhat.end(), [](double r) { return !(r <= kRhatThreshold); });
  return set;
}

}  // namespace detail

// Seeds: the test set depends on (seed, repeat) only, the training draw and
// its mask on (seed, repeat, n_train), and chains additionally on (k, method).
inline GridRow run_toy_cell(const GridExperimentConfig& config, std::size_t n_index, std::size_t k_index,
                            std::size_t m_index, std::size_t repeat) {
  GridRow row;
  row.n_train = config.n_train[n_index];
  row.k = config.k[k_index];
  row.method = config.methods[m_index];
  row.repeat = repeat;
  const TrueToyModel truth(config.truth);
  try {
    Rng test_rng(derive_seed(config.seed, {repeat, 0xE57}));
    const Dataset test = simulate_toy(truth, config.test_size, test_rng);
    row.test_hash = dataset_hash(test);

    Rng train_rng(derive_seed(config.seed, {repeat, row.n_train, 0x7EA1}));
    Dataset train = simulate_toy(truth, row.n_train, train_rng);
    if (config.missing_rate > 0.0) {
      Rng mask_rng(derive_seed(config.seed, {repeat, row.n_train, 0x3A5C}));
      train = mask_at_random(train, MissingnessSpec{{config.missing_rate}}, mask_rng);
    }

    ConstrainedGaussianMixtureSpec spec;
    spec.dim = truth.feature_dim();
    spec.slope = row.k;
    const ConstrainedGaussianMixture cgm(spec);
    const auto chain_seed = [&](Method m) {
      return derive_seed(config.seed, {repeat, row.n_train, k_index, static_cast<std::uint64_t>(m)});
    };

    SampleSet set;
    std::unique_ptr<ModelFamily> scored;
    if (row.method == Method::BayesReg) {
      LogisticRegressionSpec rspec;
      rspec.dim = truth.feature_dim();
      rspec.center = observed_means(train);
      auto reg = std::make_unique<LogisticRegression>(rspec);
      ChainConfig rc = config.regression;
      rc.seed = chain_seed(Method::BayesReg);
      std::vector<Dataset> sets{train};
      if (train.has_missing()) {
        // generator draws come from the discriminative posterior of the same cell
        ChainConfig dc = config.chain;
        dc.seed = chain_seed(Method::DiscMcmc);
        const SampleSet gen = run_chains(PosteriorTarget(PosteriorKind::Discriminative, cgm, train), dc);
        sets = impute_for_regression(train, cgm, gen, rc.n_chains, derive_seed(rc.seed, {0x1A9})).datasets;
      }
      set = detail::regression_samples(*reg, sets, rc);
      scored = std::move(reg);
    } else {
      const auto kind = row.method == Method::JointMcmc ? PosteriorKind::Joint : PosteriorKind::Discriminative;
      ChainConfig cc = config.chain;
      cc.seed = chain_seed(row.method);
      set = run_chains(PosteriorTarget(kind, cgm, train), cc);
    }
    const auto model = scored ? scored.get() : static_cast<const ModelFamily*>(&cgm);
    Rng eval_rng(derive_seed(config.seed, {repeat, 0xE7A1}));
    row.perplexity = predictive_report(*model, set.pooled(), test, &eval_rng).perplexity;
    row.acceptance = set.mean_acceptance();
    row.rhat_max = detail::max_rhat(set);
    row.rhat_flag = set.rhat_flag;
  } catch (const std::exception& e) {
    row.status = detail::csv_safe(std::string("error: ") + e.what());
  }
  return row;
}

// Cells run on `workers` threads; rows are stored by cell index so the
// output order does not depend on completion order.
inline GridResult run_toy_grid(const GridExperimentConfig& config) {
  config.validate();
  struct Key {
    std::size_t n, k, m, r;
  };
  std::vector<Key> keys;
  for (std::size_t n = 0; n < config.n_train.size(); ++n) {
    for (std::size_t k = 0; k < config.k.size(); ++k) {
      for (std::size_t m = 0; m < config.methods.size(); ++m) {
        for (std::size_t r = 0; r < config.repeats; ++r) keys.push_back({n, k, m, r});
      }
    }
  }
  GridResult result;
  result.rows.resize(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      result.rows[i] = run_toy_cell(config, keys[i].n, keys[i].k, keys[i].m, keys[i].r);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, keys.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

inline void write_grid_csv(const GridResult& result, std::ostream& out) {
  out << "n_train,k,method,repeat,perplexity,acceptance,rhat,rhat_flag,test_hash,status\n";
  for (const auto& r : result.rows) {
    out << r.n_train << ',' << dispost::detail::format_double(r.k) << ',' << to_string(r.method) << ',' << r.repeat
        << ',' << dispost::detail::format_double(r.perplexity) << ',' << dispost::detail::format_double(r.acceptance)
        << ',' << dispost::detail::format_double(r.rhat_max) << ',' << (r.rhat_flag ? 1 : 0) << ',' << r.test_hash
        << ',' << r.status << '\n';
  }
}

struct CellSummary {
  std::size_t n_train = 0;
  double k = 0.0;
  std::map<std::string, double> mean_perplexity;  // method -> mean over successful repeats
  std::map<std::string, std::size_t> successes;
  std::string winner;  // method name, "tie", or "none"
};

inline constexpr double kTieTolerance = 1e-9;

// Mean perplexity per (n_train, k, method) and the argmin method per cell;
// means within 1e-9 of the best are a tie.
inline std::vector<CellSummary> summarize(const GridResult& result) {
  std::vector<CellSummary> out;
  std::map<std::pair<std::size_t, double>, std::size_t> index;
  std::map<std::pair<std::size_t, std::string>, double> sums;
  for (const auto& r : result.rows) {
    const auto key = std::make_pair(r.n_train, r.k);
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) out.push_back({r.n_train, r.k, {}, {}, "none"});
    auto& cell = out[it->second];
    const std::string m = to_string(r.method);
    cell.mean_perplexity.try_emplace(m, 0.0);
    cell.successes.try_emplace(m, 0);
    if (r.status != "ok" || !std::isfinite(r.perplexity)) continue;
    cell.mean_perplexity[m] += r.perplexity;
    ++cell.successes[m];
  }
  for (auto& cell : out) {
    double best = kPosInf;
    for (auto& [m, v] : cell.mean_perplexity) {
      v = cell.successes[m] ? v / static_cast<double>(cell.successes[m]) : std::nan("");
      if (std::isfinite(v)) best = std::min(best, v);
    }
    if (!std::isfinite(best)) continue;
    std::vector<std::string> winners;
    for (const auto& [m, v] : cell.mean_perplexity) {
      if (std::isfinite(v) && v - best <= kTieTolerance) winners.push_back(m);
    }
    cell.winner = winners.size() == 1 ? winners.front() : "tie";
  }
  std::sort(out.begin(), out.end(), [](const CellSummary& a, const CellSummary& b) {
    return std::tie(a.n_train, a.k) < std::tie(b.n_train, b.k);
  });
  return out;
}

inline void write_winner_csv(const std::vector<CellSummary>& cells, std::ostream& out) {
  std::vector<std::string> methods;
  for (const auto& c : cells) {
    for (const auto& [m, v] : c.mean_perplexity) {
      if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    }
  }
  std::sort(methods.begin(), methods.end());
  out << "n_train,k";
  for (const auto& m : methods) out << ",mean_" << m;
  out << ",winner\n";
  for (const auto& c : cells) {
    out << c.n_train << ',' << dispost::detail::format_double(c.k);
    for (const auto& m : methods) {
      auto it = c.mean_perplexity.find(m);
      out << ',' << dispost::detail::format_double(it == c.mean_perplexity.end() ? std::nan("") : it->second);
    }
    out << ',' << c.winner << '\n';
  }
}

}  // namespace dispost::harness
