#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "dispost/harness/config.hpp"
#include "dispost/harness/data_io.hpp"
#include "dispost/harness/doc_experiment.hpp"
#include "dispost/harness/plots.hpp"
#include "dispost/harness/toy_grid.hpp"

using namespace dispost;
using namespace dispost::harness;
namespace fs = std::filesystem;

namespace {

Config parse_config(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}

GridExperimentConfig tiny_grid() {
  GridExperimentConfig g;
  g.n_train = {16, 32};
  g.k = {0.0};
  g.test_size = 200;
  g.methods = {Method::JointMcmc, Method::DiscMcmc};
  g.repeats = 2;
  g.seed = 3;
  g.chain.n_chains = 1;
  g.chain.burn_in = 200;
  g.chain.thinning = 2;
  g.chain.n_keep = 20;
  return g;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dispost_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ConfigTest, ParsesValuesListsAndComments) {
  auto c = parse_config("# header\nn_train = 32, 64 # trailing\nname=abc\nflag = true\nrate=0.25\n");
  EXPECT_EQ(c.get_size_list("n_train", {}), (std::vector<std::size_t>{32, 64}));
  EXPECT_EQ(c.get_string("name", ""), "abc");
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_DOUBLE_EQ(c.get_double("rate", 0.0), 0.25);
  EXPECT_EQ(c.get_uint("absent", 7), 7u);
  EXPECT_NO_THROW(c.check_all_used());
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  auto c = parse_config("n_train = 32\ntypo_key = 1\n");
  c.get_size_list("n_train", {});
  EXPECT_THROW(c.check_all_used(), UsageError);
  EXPECT_THROW(Config::parse_uint("-1", "x"), UsageError);
  EXPECT_THROW(Config::parse_uint("3.5", "x"), UsageError);
  EXPECT_EQ(Config::parse_uint(" 42 ", "x"), 42u);
  EXPECT_THROW(parse_config("no equals sign\n"), IoError);
  EXPECT_THROW(GridExperimentConfig::from(parse_config("methods = jMCMC, CML\n")), UsageError);
  EXPECT_THROW(GridExperimentConfig::from(parse_config("methods = ML\n")), UsageError);
  EXPECT_THROW(Config::load("/nonexistent/dir/x.cfg"), IoError);
}

TEST(ConfigTest, ChainKeysReachGridConfig) {
  const auto c = parse_config("chain.chains = 2\nchain.burn_in = 77\nreg.n_keep = 9\nworkers = 3\n");
  const auto g = GridExperimentConfig::from(c);
  EXPECT_EQ(g.chain.n_chains, 2u);
  EXPECT_EQ(g.chain.burn_in, 77u);
  EXPECT_EQ(g.regression.n_keep, 9u);
  EXPECT_EQ(g.regression.burn_in, 5500u);
  EXPECT_EQ(g.workers, 3u);
  EXPECT_NO_THROW(c.check_all_used());
}

TEST(DataIo, CsvRoundTripWithMissing) {
  Dataset d(3, 2);
  d.add(0, {1.5, std::nullopt});
  d.add(2, {-0.125, 1e-300});
  d.add(1, {std::nullopt, std::nullopt});
  std::stringstream ss;
  write_dataset_csv(d, ss);
  const Dataset back = read_dataset_csv(ss);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.num_classes, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.observations[i].label, d.observations[i].label);
    EXPECT_EQ(back.observations[i].features, d.observations[i].features);
  }
  EXPECT_EQ(dataset_hash(back), dataset_hash(d));
  d.observations[0].features[0] = 1.5000000001;
  EXPECT_NE(dataset_hash(back), dataset_hash(d));
}

TEST(DataIo, CsvErrors) {
  std::istringstream bad_header("label,x_0\n0,1\n");
  EXPECT_THROW(read_dataset_csv(bad_header), IoError);
  std::istringstream ragged("class,x_0,x_1\n0,1\n");
  EXPECT_THROW(read_dataset_csv(ragged), IoError);
  std::istringstream bad_label("class,x_0\n1.5,1\n");
  EXPECT_THROW(read_dataset_csv(bad_label), IoError);
}

TEST(DataIo, ObservedMeansSkipMissing) {
  Dataset d(2, 2);
  d.add(0, {1.0, std::nullopt});
  d.add(1, {3.0, 4.0});
  EXPECT_EQ(observed_means(d), (std::vector<double>{2.0, 4.0}));
}

TEST(DataIo, BagOfWords) {
  std::istringstream in("0\tapple:2 pear:1\n\n1\tpear:3 fig:1 apple:1\n");
  const Corpus c = read_bag_of_words(in);
  EXPECT_EQ(c.vocabulary, (std::vector<std::string>{"apple", "pear", "fig"}));
  ASSERT_EQ(c.documents.size(), 2u);
  EXPECT_EQ(c.documents.num_classes, 2);
  EXPECT_EQ(c.documents.observations[1].features, (std::vector<Feature>{1.0, 3.0, 1.0}));
  EXPECT_EQ(c.documents.observations[0].features[2], 0.0);
  std::istringstream no_tab("0 apple:1\n");
  EXPECT_THROW(read_bag_of_words(no_tab), IoError);
  std::istringstream bad_count("0\tapple:1.5\n");
  EXPECT_THROW(read_bag_of_words(bad_count), IoError);
}

TEST(FeatureSelection, MutualInformationByHand) {
  // class 0: {w0}, {w0, w1}; class 1: {w1}, {w2}; one pseudo-count per cell
  Dataset d(2, 3);
  d.add(0, {1.0, 0.0, 0.0});
  d.add(0, {2.0, 1.0, 0.0});
  d.add(1, {0.0, 1.0, 0.0});
  d.add(1, {0.0, 0.0, 4.0});
  const auto mi = word_presence_mi(d);
  // w0 cells (c0 present, c0 absent, c1 present, c1 absent) = (3, 1, 1, 3) / 8
  const double mi0 = 2.0 * (3.0 / 8.0) * std::log(1.5) + 2.0 * (1.0 / 8.0) * std::log(0.5);
  // w2 cells = (1, 3, 2, 2) / 8, presence marginal 3/8
  const double mi2 = (1.0 / 8.0) * std::log(2.0 / 3.0) + (3.0 / 8.0) * std::log(1.2) +
                     (2.0 / 8.0) * std::log(4.0 / 3.0) + (2.0 / 8.0) * std::log(0.8);
  EXPECT_NEAR(mi[0], mi0, 1e-14);
  EXPECT_NEAR(mi[1], 0.0, 1e-14);
  EXPECT_NEAR(mi[2], mi2, 1e-14);
  EXPECT_EQ(select_features_mi(d, 1).word_ids, (std::vector<std::size_t>{0}));
  EXPECT_EQ(select_features_mi(d, 2).word_ids, (std::vector<std::size_t>{0, 2}));
  EXPECT_THROW(select_features_mi(d, 0), UsageError);
  EXPECT_THROW(select_features_mi(d, 4), UsageError);
}

TEST(FeatureSelection, TiesGoToLowerId) {
  Dataset d(2, 4);
  d.add(0, {0.0, 1.0, 0.0, 1.0});
  d.add(1, {1.0, 0.0, 1.0, 0.0});
  EXPECT_EQ(select_features_mi(d, 1).word_ids, (std::vector<std::size_t>{0}));
  EXPECT_EQ(select_features_mi(d, 3).word_ids, (std::vector<std::size_t>{0, 1, 2}));
  const Dataset p = project(d, {1, 3});
  EXPECT_EQ(p.feature_dim, 2u);
  EXPECT_EQ(p.observations[0].features, (std::vector<Feature>{1.0, 1.0}));
  EXPECT_EQ(slice(d, 1, 2).observations[0].label, 1);
}

TEST(ToyGrid, DeterministicAndSharedTestSets) {
  const auto g = tiny_grid();
  const GridResult a = run_toy_grid(g);
  const GridResult b = run_toy_grid(g);
  ASSERT_EQ(a.rows.size(), 2u * 2u * 2u);
  EXPECT_EQ(a.failures(), 0u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].perplexity, b.rows[i].perplexity);
    EXPECT_EQ(a.rows[i].test_hash, b.rows[i].test_hash);
    EXPECT_TRUE(std::isfinite(a.rows[i].perplexity));
    EXPECT_GE(a.rows[i].perplexity, 1.0);
  }
  // methods within one (n, k, repeat) see the same test set; repeats differ
  for (const auto& r : a.rows) {
    for (const auto& s : a.rows) {
      if (r.n_train == s.n_train && r.k == s.k && r.repeat == s.repeat) {
        EXPECT_EQ(r.test_hash, s.test_hash);
      }
      if (r.repeat != s.repeat) {
        EXPECT_NE(r.test_hash, s.test_hash);
      }
    }
  }
}

TEST(ToyGrid, WorkersDoNotChangeResults) {
  auto g = tiny_grid();
  g.n_train = {16};
  const GridResult serial = run_toy_grid(g);
  g.workers = 3;
  const GridResult parallel = run_toy_grid(g);
  ASSERT_EQ(serial.rows.size(), parallel.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) EXPECT_EQ(serial.rows[i].perplexity, parallel.rows[i].perplexity);
}

TEST(ToyGrid, SummaryPicksArgminAndTies) {
  GridResult r;
  auto row = [](std::size_t n, double k, Method m, std::size_t rep, double p) {
    GridRow g;
    g.n_train = n;
    g.k = k;
    g.method = m;
    g.repeat = rep;
    g.perplexity = p;
    return g;
  };
  r.rows = {row(32, 0, Method::JointMcmc, 0, 1.5), row(32, 0, Method::JointMcmc, 1, 1.7),
            row(32, 0, Method::DiscMcmc, 0, 1.8), row(32, 0, Method::DiscMcmc, 1, 1.8),
            row(64, 0, Method::JointMcmc, 0, 1.4), row(64, 0, Method::DiscMcmc, 0, 1.4),
            row(64, 1, Method::JointMcmc, 0, 1.9), row(64, 1, Method::DiscMcmc, 0, 1.2)};
  r.rows.back().status = "failed: x";
  const auto cells = summarize(r);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[0].winner, "jMCMC");
  EXPECT_NEAR(cells[0].mean_perplexity.at("jMCMC"), 1.6, 1e-15);
  EXPECT_EQ(cells[1].winner, "tie");
  EXPECT_EQ(cells[2].winner, "jMCMC");  // the failed dMCMC row is excluded
  EXPECT_EQ(cells[2].successes.at("dMCMC"), 0u);
}

TEST(Plots, WinnerSvgMatchesCsv) {
  const auto g = tiny_grid();
  const GridResult result = run_toy_grid(g);
  const auto dir = scratch_dir("plots");
  const auto written = emit_plots(result, dir, 1);
  EXPECT_TRUE(fs::exists(dir / "grid.csv"));
  EXPECT_TRUE(fs::exists(dir / "winners.csv"));
  ASSERT_TRUE(fs::exists(dir / "winner_grid.svg"));
  EXPECT_TRUE(fs::exists(dir / "perplexity_vs_n_k0.svg"));

  // winners.csv rows: n_train,k,mean_dMCMC,mean_jMCMC,winner
  std::map<std::string, std::string> csv_winner;
  std::istringstream csv(slurp(dir / "winners.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "n_train,k,mean_dMCMC,mean_jMCMC,winner");
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 5u);
    const double a = std::stod(cells[2]), b = std::stod(cells[3]);
    const std::string argmin = std::abs(a - b) <= 1e-9 ? "tie" : (a < b ? "dMCMC" : "jMCMC");
    EXPECT_EQ(cells[4], argmin);
    csv_winner[cells[0] + "/" + cells[1]] = cells[4];
  }
  const std::string svg = slurp(dir / "winner_grid.svg");
  const std::regex rect(R"re(data-n="(\d+)" data-k="([^"]+)" data-winner="([^"]+)")re");
  std::size_t seen = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), rect); it != std::sregex_iterator(); ++it, ++seen) {
    EXPECT_EQ(csv_winner.at((*it)[1].str() + "/" + (*it)[2].str()), (*it)[3].str());
  }
  EXPECT_EQ(seen, csv_winner.size());
  fs::remove_all(dir);
}

TEST(Plots, SingleMethodHasNoWinnerGrid) {
  auto g = tiny_grid();
  g.methods = {Method::DiscMcmc};
  g.n_train = {16};
  const auto dir = scratch_dir("single");
  emit_plots(run_toy_grid(g), dir, 1);
  EXPECT_FALSE(fs::exists(dir / "winner_grid.svg"));
  EXPECT_TRUE(fs::exists(dir / "grid.csv"));
  fs::remove_all(dir);
}

TEST(Plots, EmptyResultsWriteMarker) {
  const auto dir = scratch_dir("empty");
  const auto written = emit_plots(GridResult{}, dir, 1);
  ASSERT_EQ(written.size(), 1u);
  EXPECT_EQ(written[0].filename(), "NO_PLOTS.txt");
  EXPECT_FALSE(fs::exists(dir / "grid.csv"));
  fs::remove_all(dir);
}

TEST(Plots, UnwritableDirectory) {
  EXPECT_THROW(emit_plots(GridResult{}, "/proc/dispost_no_such_dir/out", 1), IoError);
}

TEST(DocExperiment, MumTruthDiscriminativeBeatsChance) {
  // a MUM-generated corpus is learnable by MUM; chance perplexity is 4
  const auto c = parse_config(
      "synthetic.truth = MUM\nsynthetic.n_docs = 400\nn_train = 100\nn_test = 300\nmodels = MUM\n"
      "methods = dMCMC\nchain.burn_in = 300\nchain.thinning = 5\nchain.n_keep = 60\nseed = 4\n");
  const auto config = DocExperimentConfig::from(c);
  c.check_all_used();
  const DocResult result = run_doc_experiment(config);
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_EQ(result.rows[0].status, "ok");
  EXPECT_TRUE(result.synthetic);
  ASSERT_EQ(result.selected_words.size(), 1u);
  EXPECT_EQ(result.selected_words[0].size(), 25u);
  EXPECT_LT(mean_doc_perplexity(result, DocModel::Mum, Method::DiscMcmc), 4.0);
  std::ostringstream table;
  write_doc_table_csv(result, config, table);
  const std::string text = table.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "model,dMCMC,corpus");
}

TEST(DocExperiment, RejectsBayesReg) {
  EXPECT_THROW(DocExperimentConfig::from(parse_config("methods = BayesReg\n")), UsageError);
}

TEST(ToyGrid, ImputedRegressionChainsUseWithinChainRhat) {
  // opposite labelings give well separated regression posteriors
  Dataset a(2, 1), b(2, 1);
  for (int i = 0; i < 40; ++i) {
    const double x = (i % 2 ? 1.0 : -1.0) * (1.0 + 0.05 * i);
    a.add(x > 0 ? 1 : 0, {x});
    b.add(x > 0 ? 0 : 1, {x});
  }
  LogisticRegressionSpec spec;
  spec.dim = 1;
  spec.weight_bound = 5.0;
  const LogisticRegression reg(spec);
  ChainConfig config;
  config.n_chains = 2;
  config.burn_in = 3000;
  config.thinning = 5;
  config.n_keep = 400;
  const SampleSet pooled = harness::detail::regression_samples(reg, {a, a}, config);
  const SampleSet imputed = harness::detail::regression_samples(reg, {a, b}, config);
  // the same chains judged across datasets would look unmixed
  const std::vector<double> cross = split_rhat(imputed);
  EXPECT_GT(*std::max_element(cross.begin(), cross.end()), 1.5);
  EXPECT_LT(*std::max_element(imputed.rhat.begin(), imputed.rhat.end()), 1.1);
  EXPECT_LT(*std::max_element(pooled.rhat.begin(), pooled.rhat.end()), 1.1);
}
