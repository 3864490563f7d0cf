#pragma once

#include <cmath>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dispost/evaluation.hpp"
#include "dispost/harness/config.hpp"
#include "dispost/harness/data_io.hpp"
#include "dispost/harness/toy_grid.hpp"
#include "dispost/models.hpp"
#include "dispost/sampler.hpp"

namespace dispost::harness {

enum class DocModel { Mum, Mlda };

inline std::string to_string(DocModel m) { return m == DocModel::Mum ? "MUM" : "mLDA"; }

inline DocModel parse_doc_model(const std::string& s) {
  if (s == "MUM" || s == "mum") return DocModel::Mum;
  if (s == "mLDA" || s == "mlda") return DocModel::Mlda;
  throw UsageError("unknown document model '" + s + "'");
}

// Generator for a labelled synthetic corpus. Its parameters are drawn from
// the chosen family's prior (with the concentrations below) once per seed.
struct SyntheticCorpusSpec {
  DocModel truth = DocModel::Mlda;
  std::size_t n_docs = 1100;
  int classes = 4;
  std::size_t vocab = 60;
  std::size_t words_per_doc = 50;
  std::size_t topics = 4;            // mLDA truth only
  double beta_concentration = 2.0;   // topic-word concentration of the truth
  double alpha_concentration = 1.0;  // mLDA truth only
};

struct DocExperimentConfig {
  std::string corpus_path;  // bag-of-words file; empty selects the synthetic corpus
  SyntheticCorpusSpec synthetic{};
  std::size_t n_words = 25;
  std::size_t n_train = 100;
  std::size_t n_test = 1000;
  std::vector<DocModel> models{DocModel::Mum, DocModel::Mlda};
  std::vector<Method> methods{Method::JointMcmc, Method::DiscMcmc, Method::Cml};
  std::size_t repeats = 1;
  std::uint64_t seed = 1;
  ChainConfig chain = [] {
    ChainConfig c;
    c.n_chains = 1;
    c.burn_in = 100;
    c.thinning = 10;
    c.n_keep = 100;
    return c;
  }();
  std::size_t cml_restarts = 20;
  CmlOptions cml{};
  // mLDA likelihoods are Monte Carlo integrals, so its CML budget is set on
  // its own; 0 inherits the general value.
  std::size_t mlda_cml_restarts = 0;
  std::size_t mlda_cml_max_sweeps = 0;
  std::size_t topics = 4;  // mLDA fit
  McSettings mc{};

  void validate() const {
    if (models.empty() || methods.empty()) throw UsageError("docs: models and methods must be non-empty");
    if (repeats < 1) throw UsageError("docs: repeats must be >= 1");
    if (n_train < 1 || n_test < 1) throw UsageError("docs: split sizes must be >= 1");
    for (auto m : methods) {
      if (m == Method::BayesReg) throw UsageError("docs: BayesReg is only available in the toy grid");
    }
    if (corpus_path.empty() && n_train + n_test > synthetic.n_docs) {
      throw UsageError("docs: n_train + n_test exceeds the corpus size");
    }
    if (corpus_path.empty() && n_words > synthetic.vocab) throw UsageError("docs: n_words exceeds the corpus vocabulary");
    if (cml_restarts < 1) throw UsageError("docs: cml restarts must be >= 1");
    chain.validate();
  }

  static DocExperimentConfig from(const Config& c) {
    DocExperimentConfig d;
    d.corpus_path = c.get_string("corpus", "");
    d.synthetic.truth = parse_doc_model(c.get_string("synthetic.truth", to_string(d.synthetic.truth)));
    d.synthetic.n_docs = c.get_uint("synthetic.n_docs", d.synthetic.n_docs);
    d.synthetic.classes = static_cast<int>(c.get_uint("synthetic.classes", d.synthetic.classes));
    d.synthetic.vocab = c.get_uint("synthetic.vocab", d.synthetic.vocab);
    d.synthetic.words_per_doc = c.get_uint("synthetic.words_per_doc", d.synthetic.words_per_doc);
    d.synthetic.topics = c.get_uint("synthetic.topics", d.synthetic.topics);
    d.synthetic.beta_concentration = c.get_double("synthetic.beta_concentration", d.synthetic.beta_concentration);
    d.synthetic.alpha_concentration = c.get_double("synthetic.alpha_concentration", d.synthetic.alpha_concentration);
    d.n_words = c.get_uint("n_words", d.n_words);
    d.n_train = c.get_uint("n_train", d.n_train);
    d.n_test = c.get_uint("n_test", d.n_test);
    if (c.has("models")) {
      d.models.clear();
      for (const auto& m : c.get_list("models", {})) d.models.push_back(parse_doc_model(m));
    }
    if (c.has("methods")) {
      d.methods.clear();
      for (const auto& m : c.get_list("methods", {})) d.methods.push_back(parse_method(m));
    }
    d.repeats = c.get_uint("repeats", d.repeats);
    d.seed = master_seed(c, d.seed);
    d.chain = read_chain_config(c, "chain.", d.chain);
    d.cml_restarts = c.get_uint("cml.restarts", d.cml_restarts);
    d.cml.max_sweeps = c.get_uint("cml.max_sweeps", d.cml.max_sweeps);
    d.mlda_cml_restarts = c.get_uint("mlda.cml_restarts", d.mlda_cml_restarts);
    d.mlda_cml_max_sweeps = c.get_uint("mlda.cml_max_sweeps", d.mlda_cml_max_sweeps);
    d.topics = c.get_uint("mlda.topics", d.topics);
    d.mc.max_draws = c.get_uint("mlda.max_draws", d.mc.max_draws);
    d.mc.rel_se_target = c.get_double("mlda.rel_se_target", d.mc.rel_se_target);
    d.validate();
    return d;
  }
};

struct DocRow {
  DocModel model = DocModel::Mum;
  Method method = Method::DiscMcmc;
  std::size_t repeat = 0;
  double perplexity = std::nan("");
  double acceptance = std::nan("");
  double rhat_max = std::nan("");
  std::uint64_t test_hash = 0;
  std::string status = "ok";
};

struct DocResult {
  bool synthetic = true;
  std::vector<DocRow> rows;  // ordered by (model, method, repeat)
  std::vector<std::vector<std::size_t>> selected_words;  // per repeat
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const DocRow& r) { return r.status != "ok"; }));
  }
};

// Reference perplexities for a Reuters subset, shown next to our own results.
struct ReferenceValue {
  const char* model;
  const char* method;
  double perplexity;
};
inline constexpr ReferenceValue kReferencePerplexities[] = {
    {"MUM", "dMCMC", 2.56}, {"MUM", "jMCMC", 3.98}, {"MUM", "CML", 4.84},
    {"mLDA", "dMCMC", 2.36}, {"mLDA", "jMCMC", 3.92}, {"mLDA", "CML", 3.14},
};

inline Corpus synthetic_corpus(const SyntheticCorpusSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Corpus corpus;
  if (spec.truth == DocModel::Mum) {
    MixtureOfUnigramsSpec ms;
    ms.vocab = spec.vocab;
    ms.classes = spec.classes;
    ms.beta_concentration = spec.beta_concentration;
    const MixtureOfUnigrams truth(ms);
    corpus.documents = truth.simulate_corpus(truth.sample_prior(rng), spec.n_docs, spec.words_per_doc, rng);
  } else {
    MixtureLdaSpec ls;
    ls.vocab = spec.vocab;
    ls.classes = spec.classes;
    ls.topics = spec.topics;
    ls.beta_concentration = spec.beta_concentration;
    ls.alpha_concentration = spec.alpha_concentration;
    const MixtureLda truth(ls);
    corpus.documents = truth.simulate_corpus(truth.sample_prior(rng), spec.n_docs, spec.words_per_doc, rng);
  }
  for (std::size_t w = 0; w < spec.vocab; ++w) corpus.vocabulary.push_back("w" + std::to_string(w));
  return corpus;
}

inline std::unique_ptr<ModelFamily> make_doc_model(DocModel m, const DocExperimentConfig& config, int classes,
                                                   std::size_t vocab) {
  if (m == DocModel::Mum) {
    MixtureOfUnigramsSpec s;
    s.vocab = vocab;
    s.classes = classes;
    return std::make_unique<MixtureOfUnigrams>(s);
  }
  MixtureLdaSpec s;
  s.vocab = vocab;
  s.classes = classes;
  s.topics = config.topics;
  s.mc = config.mc;
  return std::make_unique<MixtureLda>(s);
}

// One corpus per repeat (synthetic: regenerated from seed; file: reshuffled
// split). Feature selection sees the training split only.
inline DocResult run_doc_experiment(const DocExperimentConfig& config) {
  config.validate();
  DocResult result;
  result.synthetic = config.corpus_path.empty();
  std::optional<Corpus> file_corpus;
  if (!result.synthetic) {
    file_corpus = read_bag_of_words(std::filesystem::path(config.corpus_path));
    if (config.n_train + config.n_test > file_corpus->documents.size()) {
      throw UsageError("docs: n_train + n_test exceeds the corpus size");
    }
    if (config.n_words > file_corpus->documents.feature_dim) throw UsageError("docs: n_words exceeds the corpus vocabulary");
  }

  std::vector<std::vector<DocRow>> by_repeat(config.repeats);
  for (std::size_t r = 0; r < config.repeats; ++r) {
    Corpus corpus;
    if (result.synthetic) {
      corpus = synthetic_corpus(config.synthetic, derive_seed(config.seed, {r, 0xC0}));
    } else {
      corpus = *file_corpus;
      Rng shuffle_rng(derive_seed(config.seed, {r, 0x5F}));
      std::shuffle(corpus.documents.observations.begin(), corpus.documents.observations.end(), shuffle_rng);
    }
    const Dataset train_full = slice(corpus.documents, 0, config.n_train);
    const Dataset test_full = slice(corpus.documents, config.n_train, config.n_train + config.n_test);
    const auto selection = select_features_mi(train_full, config.n_words);
    result.selected_words.push_back(selection.word_ids);
    const Dataset train = project(train_full, selection.word_ids);
    const Dataset test = project(test_full, selection.word_ids);
    const std::uint64_t test_hash = dataset_hash(test);

    for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
      const auto model = make_doc_model(config.models[mi], config, train.num_classes, train.feature_dim);
      for (std::size_t k = 0; k < config.methods.size(); ++k) {
        DocRow row;
        row.model = config.models[mi];
        row.method = config.methods[k];
        row.repeat = r;
        row.test_hash = test_hash;
        try {
          const std::uint64_t cell_seed = derive_seed(config.seed, {r, mi, static_cast<std::uint64_t>(row.method)});
          std::vector<std::vector<double>> draws;
          if (row.method == Method::Cml) {
            PosteriorTarget target(PosteriorKind::Discriminative, *model, train);
            Rng rng(cell_seed);
            std::size_t restarts = config.cml_restarts;
            CmlOptions options = config.cml;
            if (row.model == DocModel::Mlda) {
              if (config.mlda_cml_restarts) restarts = config.mlda_cml_restarts;
              if (config.mlda_cml_max_sweeps) options.max_sweeps = config.mlda_cml_max_sweeps;
            }
            draws.push_back(conditional_ml_estimate(target, restarts, rng, options).point.values);
          } else {
            const auto kind = row.method == Method::JointMcmc ? PosteriorKind::Joint : PosteriorKind::Discriminative;
            ChainConfig cc = config.chain;
            cc.seed = cell_seed;
            const SampleSet set = run_chains(PosteriorTarget(kind, *model, train), cc);
            draws = set.pooled();
            row.acceptance = set.mean_acceptance();
            row.rhat_max = detail::max_rhat(set);
          }
          Rng eval_rng(derive_seed(cell_seed, {0xE7}));
          row.perplexity = predictive_report(*model, draws, test, &eval_rng).perplexity;
        } catch (const std::exception& e) {
          row.status = detail::csv_safe(std::string("error: ") + e.what());
        }
        by_repeat[r].push_back(row);
      }
    }
  }
  // order by (model, method, repeat)
  for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      for (std::size_t r = 0; r < config.repeats; ++r) result.rows.push_back(by_repeat[r][mi * config.methods.size() + k]);
    }
  }
  return result;
}

inline void write_doc_rows_csv(const DocResult& result, std::ostream& out) {
  out << "model,method,repeat,perplexity,acceptance,rhat,test_hash,corpus,status\n";
  for (const auto& r : result.rows) {
    out << to_string(r.model) << ',' << to_string(r.method) << ',' << r.repeat << ','
        << dispost::detail::format_double(r.perplexity) << ',' << dispost::detail::format_double(r.acceptance) << ','
        << dispost::detail::format_double(r.rhat_max) << ',' << r.test_hash << ','
        << (result.synthetic ? "synthetic" : "file") << ',' << r.status << '\n';
  }
}

// Mean perplexity per (model, method) over successful repeats.
inline double mean_doc_perplexity(const DocResult& result, DocModel model, Method method) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : result.rows) {
    if (r.model != model || r.method != method || r.status != "ok" || !std::isfinite(r.perplexity)) continue;
    sum += r.perplexity;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

// Rows are models, columns methods, cells mean perplexities.
inline void write_doc_table_csv(const DocResult& result, const DocExperimentConfig& config, std::ostream& out) {
  out << "model";
  for (auto m : config.methods) out << ',' << to_string(m);
  out << ",corpus\n";
  for (auto model : config.models) {
    out << to_string(model);
    for (auto m : config.methods) out << ',' << dispost::detail::format_double(mean_doc_perplexity(result, model, m));
    out << ',' << (result.synthetic ? "synthetic" : "file") << '\n';
  }
}

inline void write_reference_csv(std::ostream& out) {
  out << "model,method,reference_perplexity,source\n";
  for (const auto& r : kReferencePerplexities) {
    out << r.model << ',' << r.method << ',' << dispost::detail::format_double(r.perplexity)
        << ",published Reuters subset (not reproduced here)\n";
  }
}

}  // namespace dispost::harness
