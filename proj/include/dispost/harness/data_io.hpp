#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dispost/errors.hpp"
#include "dispost/model.hpp"
#include "dispost/sample_io.hpp"

namespace dispost::harness {

// Header `class,x_0,...,x_{D-1}`; missing components are written as NA.
inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  out << "class";
  for (std::size_t d = 0; d < data.feature_dim; ++d) out << ",x_" << d;
  out << '\n';
  for (const auto& o : data.observations) {
    out << o.label;
    for (const auto& f : o.features) {
      out << ',';
      if (f) out << dispost::detail::format_double(*f);
      else out << "NA";
    }
    out << '\n';
  }
}

inline void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset_csv(data, out);
}

// num_classes = 0 infers C as the largest label + 1.
inline Dataset read_dataset_csv(std::istream& in, int num_classes = 0) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset csv: missing header");
  const auto header = dispost::detail::split(dispost::detail::trim(line), ',');
  if (header.empty() || dispost::detail::trim(header[0]) != "class") throw IoError("dataset csv: header must start with 'class'");
  const std::size_t dim = header.size() - 1;
  Dataset data(1, dim);
  int max_label = -1;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = dispost::detail::trim(line);
    if (line.empty()) continue;
    const auto cells = dispost::detail::split(line, ',');
    if (cells.size() != dim + 1) throw IoError("dataset csv: row " + std::to_string(row) + " has wrong column count");
    const double label = dispost::detail::parse_double(cells[0], "class");
    if (label < 0 || label != std::floor(label)) throw IoError("dataset csv: row " + std::to_string(row) + " has a bad label");
    std::vector<Feature> x(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const auto cell = dispost::detail::trim(cells[d + 1]);
      if (cell != "NA") x[d] = dispost::detail::parse_double(cell, "x_" + std::to_string(d));
    }
    data.add(static_cast<int>(label), std::move(x));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  data.num_classes = num_classes > 0 ? num_classes : std::max(max_label + 1, 1);
  data.validate();
  return data;
}

inline Dataset read_dataset_csv(const std::filesystem::path& path, int num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_dataset_csv(in, num_classes);
}

// Stable 64-bit FNV-1a fingerprint of labels and feature bits.
inline std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& o : data.observations) {
    const std::int64_t label = o.label;
    mix(&label, sizeof label);
    for (const auto& f : o.features) {
      const unsigned char present = f ? 1 : 0;
      mix(&present, 1);
      if (f) mix(&*f, sizeof(double));
    }
  }
  return h;
}

// Per-component mean over observed entries (0 for a component never observed).
inline std::vector<double> observed_means(const Dataset& data) {
  std::vector<double> sum(data.feature_dim, 0.0);
  std::vector<double> count(data.feature_dim, 0.0);
  for (const auto& o : data.observations) {
    for (std::size_t d = 0; d < data.feature_dim; ++d) {
      if (!o.features[d]) continue;
      sum[d] += *o.features[d];
      count[d] += 1.0;
    }
  }
  for (std::size_t d = 0; d < sum.size(); ++d) sum[d] = count[d] > 0.0 ? sum[d] / count[d] : 0.0;
  return sum;
}

// A labelled bag-of-words collection: features are word counts over `vocabulary`.
struct Corpus {
  Dataset documents;
  std::vector<std::string> vocabulary;
};

// One document per line: `label<TAB>word:count word:count ...`. Labels are
// integers in [0, C). The vocabulary is every word seen in the file, in
// order of first appearance.
inline Corpus read_bag_of_words(std::istream& in) {
  std::map<std::string, std::size_t> ids;
  std::vector<std::string> vocab;
  std::vector<std::pair<int, std::vector<std::pair<std::size_t, double>>>> docs;
  std::string line;
  std::size_t row = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++row;
    if (dispost::detail::trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("corpus: line " + std::to_string(row) + " has no tab after the label");
    const double label = dispost::detail::parse_double(line.substr(0, tab), "label");
    if (label < 0 || label != std::floor(label)) throw IoError("corpus: line " + std::to_string(row) + " has a bad label");
    std::vector<std::pair<std::size_t, double>> counts;
    std::istringstream tokens(line.substr(tab + 1));
    std::string token;
    while (tokens >> token) {
      const auto colon = token.rfind(':');
      if (colon == std::string::npos || colon == 0) throw IoError("corpus: bad token '" + token + "'");
      const std::string word = token.substr(0, colon);
      const double count = dispost::detail::parse_double(token.substr(colon + 1), "count");
      if (count < 0 || count != std::floor(count)) throw IoError("corpus: bad count in '" + token + "'");
      auto [it, inserted] = ids.try_emplace(word, vocab.size());
      if (inserted) vocab.push_back(word);
      counts.emplace_back(it->second, count);
    }
    docs.emplace_back(static_cast<int>(label), std::move(counts));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  Corpus corpus{Dataset(std::max(max_label + 1, 1), vocab.size()), vocab};
  for (auto& [label, counts] : docs) {
    std::vector<Feature> x(vocab.size(), 0.0);
    for (const auto& [id, n] : counts) *x[id] += n;
    corpus.documents.add(label, std::move(x));
  }
  return corpus;
}

inline Corpus read_bag_of_words(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  return read_bag_of_words(in);
}

// I(class; word present) per word from a contingency table of document
// counts with one pseudo-count added to every (class, presence) cell.
inline std::vector<double> word_presence_mi(const Dataset& train) {
  const std::size_t C = static_cast<std::size_t>(train.num_classes);
  std::vector<double> out(train.feature_dim, 0.0);
  for (std::size_t w = 0; w < train.feature_dim; ++w) {
    std::vector<double> table(C * 2, 1.0);
    for (const auto& o : train.observations) {
      const auto& f = o.features[w];
      const bool present = f && *f > 0.0;
      table[static_cast<std::size_t>(o.label) * 2 + (present ? 1 : 0)] += 1.0;
    }
    double total = 0.0;
    for (double v : table) total += v;
    std::vector<double> pc(C, 0.0);
    double pb[2] = {0.0, 0.0};
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t b = 0; b < 2; ++b) {
        pc[c] += table[c * 2 + b] / total;
        pb[b] += table[c * 2 + b] / total;
      }
    }
    double mi = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t b = 0; b < 2; ++b) {
        const double p = table[c * 2 + b] / total;
        mi += p * std::log(p / (pc[c] * pb[b]));
      }
    }
    out[w] = mi;
  }
  return out;
}

struct FeatureSelection {
  std::vector<std::size_t> word_ids;  // ascending
  std::vector<double> scores;         // mutual information of every word
};

// Top n_words by mutual information on the training split; ties go to the lower id.
inline FeatureSelection select_features_mi(const Dataset& train, std::size_t n_words) {
  if (n_words == 0 || n_words > train.feature_dim) {
    throw UsageError("select_features_mi: n_words must lie in [1, " + std::to_string(train.feature_dim) + "]");
  }
  FeatureSelection out;
  out.scores = word_presence_mi(train);
  std::vector<std::size_t> order(train.feature_dim);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out.scores[a] > out.scores[b]; });
  out.word_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_words));
  std::sort(out.word_ids.begin(), out.word_ids.end());
  return out;
}

inline Dataset project(const Dataset& data, const std::vector<std::size_t>& word_ids) {
  Dataset out(data.num_classes, word_ids.size());
  out.observations.reserve(data.size());
  for (const auto& o : data.observations) {
    std::vector<Feature> x;
    x.reserve(word_ids.size());
    for (std::size_t id : word_ids) x.push_back(o.features.at(id));
    out.add(o.label, std::move(x));
  }
  return out;
}

inline Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
  Dataset out(data.num_classes, data.feature_dim);
  out.observations.assign(data.observations.begin() + static_cast<std::ptrdiff_t>(begin),
                          data.observations.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

}  // namespace dispost::harness
