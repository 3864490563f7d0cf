#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "dispost/harness/config.hpp"
#include "dispost/harness/data_io.hpp"
#include "dispost/harness/doc_experiment.hpp"
#include "dispost/harness/plots.hpp"
#include "dispost/harness/toy_grid.hpp"
#include "dispost/harness/verify.hpp"
#include "dispost/models.hpp"
#include "dispost/sample_io.hpp"
#include "dispost/sampler.hpp"

namespace fs = std::filesystem;
using namespace dispost;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCellFailures = 2;

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

int run_toy_grid_cmd(const std::string& config_path, const std::string& out_dir) {
  const auto config = harness::Config::load(config_path);
  const auto grid = harness::GridExperimentConfig::from(config);
  config.check_all_used();
  const auto start = std::chrono::steady_clock::now();
  const auto result = harness::run_toy_grid(grid);
  const auto written = harness::emit_plots(result, out_dir, grid.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& p : written) std::cout << "wrote " << p.string() << '\n';
  std::cout << result.rows.size() << " rows, " << result.failures() << " failed, " << secs << " s\n";
  const auto unconverged = std::count_if(result.rows.begin(), result.rows.end(), [](const auto& r) { return r.rhat_flag; });
  if (unconverged) std::cerr << "warning: " << unconverged << " cells have split R-hat above 1.1; consider a longer burn-in\n";
  return result.failures() ? kExitCellFailures : kExitOk;
}

int run_docs_cmd(const std::string& config_path, const std::string& out_dir) {
  const auto config = harness::Config::load(config_path);
  const auto docs = harness::DocExperimentConfig::from(config);
  config.check_all_used();
  const auto result = harness::run_doc_experiment(docs);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  {
    auto out = open_out(fs::path(out_dir) / "doc_rows.csv");
    harness::write_doc_rows_csv(result, out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "table1.csv");
    harness::write_doc_table_csv(result, docs, out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "table1_reference.csv");
    harness::write_reference_csv(out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "selected_words.csv");
    out << "repeat,rank,word\n";
    for (std::size_t r = 0; r < result.selected_words.size(); ++r) {
      for (std::size_t i = 0; i < result.selected_words[r].size(); ++i) {
        out << r << ',' << i << ',' << result.selected_words[r][i] << '\n';
      }
    }
  }
  harness::write_doc_table_csv(result, docs, std::cout);
  const auto unconverged = std::count_if(result.rows.begin(), result.rows.end(),
                                         [](const auto& r) { return r.rhat_max > kRhatThreshold; });
  if (unconverged) std::cerr << "warning: " << unconverged << " cells have split R-hat above 1.1; consider a longer burn-in\n";
  if (result.synthetic) std::cout << "note: synthetic corpus; reference values come from a real Reuters newswire corpus\n";
  return result.failures() ? kExitCellFailures : kExitOk;
}

struct SampleOptions {
  std::string model;
  std::string kind;
  std::string data;
  std::string out;
  double k = 0.0;
  std::size_t values = 0;
  std::size_t topics = 4;
  ChainConfig chain{};
};

std::unique_ptr<ModelFamily> make_model(const SampleOptions& o, const Dataset& data) {
  if (o.model == "cgm") {
    if (data.num_classes != 2) throw UsageError("cgm needs exactly 2 classes");
    ConstrainedGaussianMixtureSpec spec;
    spec.dim = data.feature_dim;
    spec.slope = o.k;
    return std::make_unique<ConstrainedGaussianMixture>(spec);
  }
  if (o.model == "logreg") {
    LogisticRegressionSpec spec;
    spec.dim = data.feature_dim;
    spec.classes = data.num_classes;
    spec.center = harness::observed_means(data);
    return std::make_unique<LogisticRegression>(spec);
  }
  if (o.model == "naive-bayes") {
    DiscreteNaiveBayesSpec spec;
    spec.classes = data.num_classes;
    spec.features = data.feature_dim;
    std::size_t values = o.values;
    if (values == 0) {
      for (const auto& obs : data.observations) {
        for (const auto& f : obs.features) {
          if (f) values = std::max(values, static_cast<std::size_t>(*f) + 1);
        }
      }
    }
    spec.values = std::max<std::size_t>(values, 2);
    return std::make_unique<DiscreteNaiveBayes>(spec);
  }
  if (o.model == "mum") {
    MixtureOfUnigramsSpec spec;
    spec.vocab = data.feature_dim;
    spec.classes = data.num_classes;
    return std::make_unique<MixtureOfUnigrams>(spec);
  }
  if (o.model == "mlda") {
    MixtureLdaSpec spec;
    spec.vocab = data.feature_dim;
    spec.classes = data.num_classes;
    spec.topics = o.topics;
    return std::make_unique<MixtureLda>(spec);
  }
  throw UsageError("unknown model '" + o.model + "' (expected cgm|logreg|naive-bayes|mum|mlda)");
}

int run_sample_cmd(const SampleOptions& o) {
  const Dataset data = harness::read_dataset_csv(fs::path(o.data));
  const auto model = make_model(o, data);
  const PosteriorTarget target(parse_posterior_kind(o.kind), *model, data);
  ChainConfig chain = o.chain;
  if (const char* env = std::getenv("DISPOST_SEED")) chain.seed = harness::Config::parse_uint(env, "DISPOST_SEED");
  chain.validate();
  const SampleSet set = run_chains(target, chain);
  write_sample_set(set, o.out);
  std::cout << "wrote " << set.total_draws() << " draws of dimension " << set.dim << " to " << o.out
            << "; mean acceptance " << set.mean_acceptance() << (set.rhat_flag ? "; R-hat above 1.1" : "") << '\n';
  return kExitOk;
}

int run_verify_cmd(bool full, std::uint64_t seed) {
  harness::AcceptanceSettings settings;
  settings.seed = seed;
  bool all = true;
  for (const auto& check : harness::acceptance_checks(settings)) {
    if (check.long_running && !full) {
      std::cout << "SKIP criterion " << check.id << " (" << check.name << "): long-running, use --full\n";
      continue;
    }
    const auto r = check.run();
    all = all && r.passed;
    std::cout << harness::format_check(r) << std::endl;
  }
  return all ? kExitOk : kExitCellFailures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dispost: joint, discriminative and regression posteriors over generative model families"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  auto* toy = app.add_subcommand("toy-grid", "run the toy grid study and write CSV tables and SVG plots");
  toy->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  toy->add_option("--out", out_dir, "output directory")->capture_default_str();

  auto* docs = app.add_subcommand("docs", "run the document study and write the perplexity table");
  docs->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  docs->add_option("--out", out_dir, "output directory")->capture_default_str();

  SampleOptions so;
  auto* sample = app.add_subcommand("sample", "draw posterior samples for one model and dataset");
  sample->add_option("--model", so.model, "cgm|logreg|naive-bayes|mum|mlda")->required();
  sample->add_option("--kind", so.kind, "joint|disc|reg")->required();
  sample->add_option("--data", so.data, "dataset CSV (class,x_0..; NA for missing)")->required()->check(CLI::ExistingFile);
  sample->add_option("--out", so.out, "output directory")->required();
  sample->add_option("--k", so.k, "cgm slope k")->capture_default_str();
  sample->add_option("--values", so.values, "naive-bayes category count (0 infers from data)");
  sample->add_option("--topics", so.topics, "mlda topic count")->capture_default_str();
  sample->add_option("--chains", so.chain.n_chains)->capture_default_str();
  sample->add_option("--burn-in", so.chain.burn_in)->capture_default_str();
  sample->add_option("--thinning", so.chain.thinning)->capture_default_str();
  sample->add_option("--n-keep", so.chain.n_keep)->capture_default_str();
  sample->add_option("--kernel-width", so.chain.kernel_width)->capture_default_str();
  sample->add_option("--seed", so.chain.seed)->capture_default_str();

  bool full = false;
  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "run the invariant and oracle checks");
  verify->add_flag("--full", full, "include the experiment-scale ordering checks (tens of minutes)");
  verify->add_option("--seed", verify_seed, "master seed for the experiment-scale checks")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*toy) return run_toy_grid_cmd(config_path, out_dir);
    if (*docs) return run_docs_cmd(config_path, out_dir);
    if (*sample) return run_sample_cmd(so);
    if (*verify) {
      if (const char* env = std::getenv("DISPOST_SEED")) verify_seed = harness::Config::parse_uint(env, "DISPOST_SEED");
      return run_verify_cmd(full, verify_seed);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
