#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dispost/evaluation.hpp"
#include "dispost/harness/toy_grid.hpp"

namespace dispost::harness {

inline const std::map<std::string, std::string>& method_colors() {
  static const std::map<std::string, std::string> colors{
      {"jMCMC", "#1f77b4"}, {"dMCMC", "#d62728"}, {"BayesReg", "#2ca02c"}, {"CML", "#9467bd"},
      {"tie", "#bbbbbb"},   {"none", "#ffffff"}};
  return colors;
}

namespace detail {

inline std::string color_for(const std::string& method) {
  auto it = method_colors().find(method);
  return it == method_colors().end() ? "#000000" : it->second;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Figure-1 style grid: columns are training sizes, rows are k values, each
// cell filled with the colour of the method with the lowest mean perplexity.
inline void write_winner_svg(const std::vector<CellSummary>& cells, const std::filesystem::path& path) {
  std::vector<std::size_t> ns;
  std::vector<double> ks;
  for (const auto& c : cells) {
    if (std::find(ns.begin(), ns.end(), c.n_train) == ns.end()) ns.push_back(c.n_train);
    if (std::find(ks.begin(), ks.end(), c.k) == ks.end()) ks.push_back(c.k);
  }
  std::sort(ns.begin(), ns.end());
  std::sort(ks.begin(), ks.end());
  const double cell = 50.0, left = 60.0, top = 30.0;
  const double width = left + cell * static_cast<double>(ns.size()) + 150.0;
  const double height = top + cell * static_cast<double>(ks.size()) + 50.0;
  auto out = open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height) << "\">\n";
  out << "<text x=\"" << fmt(left) << "\" y=\"18\" font-size=\"12\">lowest mean test perplexity</text>\n";
  for (const auto& c : cells) {
    const auto col = std::find(ns.begin(), ns.end(), c.n_train) - ns.begin();
    const auto row = std::find(ks.begin(), ks.end(), c.k) - ks.begin();
    // larger k at the top
    const double y = top + cell * static_cast<double>(ks.size() - 1 - static_cast<std::size_t>(row));
    out << "<rect x=\"" << fmt(left + cell * static_cast<double>(col)) << "\" y=\"" << fmt(y) << "\" width=\""
        << fmt(cell) << "\" height=\"" << fmt(cell) << "\" fill=\"" << color_for(c.winner)
        << "\" stroke=\"#444\" data-n=\"" << c.n_train << "\" data-k=\"" << fmt(c.k) << "\" data-winner=\"" << c.winner
        << "\"/>\n";
  }
  for (std::size_t i = 0; i < ns.size(); ++i) {
    out << "<text x=\"" << fmt(left + cell * (static_cast<double>(i) + 0.5)) << "\" y=\""
        << fmt(top + cell * static_cast<double>(ks.size()) + 16) << "\" font-size=\"11\" text-anchor=\"middle\">"
        << ns[i] << "</text>\n";
  }
  for (std::size_t j = 0; j < ks.size(); ++j) {
    out << "<text x=\"" << fmt(left - 8) << "\" y=\""
        << fmt(top + cell * (static_cast<double>(ks.size() - 1 - j) + 0.55)) << "\" font-size=\"11\" text-anchor=\"end\">k="
        << fmt(ks[j]) << "</text>\n";
  }
  out << "<text x=\"" << fmt(left + cell * static_cast<double>(ns.size()) / 2) << "\" y=\"" << fmt(height - 8)
      << "\" font-size=\"11\" text-anchor=\"middle\">training points</text>\n";
  double ly = top;
  for (const auto& [name, colour] : method_colors()) {
    if (name == "none") continue;
    out << "<rect x=\"" << fmt(width - 130) << "\" y=\"" << fmt(ly) << "\" width=\"12\" height=\"12\" fill=\"" << colour
        << "\"/><text x=\"" << fmt(width - 112) << "\" y=\"" << fmt(ly + 10) << "\" font-size=\"11\">" << name
        << "</text>\n";
    ly += 18;
  }
  out << "</svg>\n";
}

struct Curve {
  std::string method;
  std::vector<double> x, mean, lower, upper;
};

// Figure-2 style: mean perplexity against training size (log2 axis) with
// bootstrap 95% bands where a cell has at least two repeats.
inline void write_curves_svg(const std::vector<Curve>& curves, double k, const std::filesystem::path& path) {
  double xmin = kPosInf, xmax = kNegInf, ymin = kPosInf, ymax = kNegInf;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      xmin = std::min(xmin, std::log2(c.x[i]));
      xmax = std::max(xmax, std::log2(c.x[i]));
      ymin = std::min(ymin, c.lower[i]);
      ymax = std::max(ymax, c.upper[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 0.1;
  const double w = 480, h = 320, left = 60, right = 120, top = 30, bottom = 40;
  auto px = [&](double x) { return left + (std::log2(x) - xmin) / (xmax - xmin) * (w - left - right); };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * (h - top - bottom); };
  auto out = open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\">\n";
  out << "<text x=\"" << fmt(left) << "\" y=\"18\" font-size=\"12\">test perplexity, k=" << fmt(k) << "</text>\n";
  out << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(h - bottom) << "\" x2=\"" << fmt(w - right) << "\" y2=\""
      << fmt(h - bottom) << "\" stroke=\"#000\"/>\n";
  out << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\"" << fmt(h - bottom)
      << "\" stroke=\"#000\"/>\n";
  out << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(top + 4) << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(ymax) << "</text>\n";
  out << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(h - bottom) << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(ymin) << "</text>\n";
  double ly = top;
  for (const auto& c : curves) {
    const std::string colour = color_for(c.method);
    if (c.x.size() > 0) {
      out << "<polygon fill=\"" << colour << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < c.x.size(); ++i) out << fmt(px(c.x[i])) << ',' << fmt(py(c.upper[i])) << ' ';
      for (std::size_t i = c.x.size(); i-- > 0;) out << fmt(px(c.x[i])) << ',' << fmt(py(c.lower[i])) << ' ';
      out << "\"/>\n";
      out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" data-method=\"" << c.method
          << "\" points=\"";
      for (std::size_t i = 0; i < c.x.size(); ++i) out << fmt(px(c.x[i])) << ',' << fmt(py(c.mean[i])) << ' ';
      out << "\"/>\n";
    }
    out << "<text x=\"" << fmt(w - right + 10) << "\" y=\"" << fmt(ly + 10) << "\" font-size=\"11\" fill=\"" << colour
        << "\">" << c.method << "</text>\n";
    ly += 16;
  }
  std::set<double> xs;
  for (const auto& c : curves) xs.insert(c.x.begin(), c.x.end());
  for (double x : xs) {
    out << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(h - bottom + 14) << "\" font-size=\"10\" text-anchor=\"middle\">"
        << fmt(x) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace detail

// Writes grid.csv, winners.csv and SVG figures into `dir`. A winner grid is
// drawn only when the table holds more than one method.
inline std::vector<std::filesystem::path> emit_plots(const GridResult& result, const std::filesystem::path& dir,
                                                     std::uint64_t seed = 1) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  if (result.rows.empty()) {
    auto out = detail::open_output(dir / "NO_PLOTS.txt");
    out << "no results: nothing to plot\n";
    written.push_back(dir / "NO_PLOTS.txt");
    return written;
  }
  {
    auto out = detail::open_output(dir / "grid.csv");
    write_grid_csv(result, out);
    written.push_back(dir / "grid.csv");
  }
  const auto cells = summarize(result);
  {
    auto out = detail::open_output(dir / "winners.csv");
    write_winner_csv(cells, out);
    written.push_back(dir / "winners.csv");
  }
  std::set<Method> methods;
  std::set<double> ks;
  for (const auto& r : result.rows) {
    methods.insert(r.method);
    ks.insert(r.k);
  }
  if (methods.size() > 1) {
    detail::write_winner_svg(cells, dir / "winner_grid.svg");
    written.push_back(dir / "winner_grid.svg");
  }
  std::size_t ki = 0;
  for (double k : ks) {
    std::vector<detail::Curve> curves;
    for (Method m : methods) {
      detail::Curve curve{to_string(m), {}, {}, {}, {}};
      std::map<std::size_t, std::vector<double>> by_n;
      for (const auto& r : result.rows) {
        if (r.k == k && r.method == m && r.status == "ok" && std::isfinite(r.perplexity)) by_n[r.n_train].push_back(r.perplexity);
      }
      for (const auto& [n, values] : by_n) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        Interval band{mean, mean};
        if (values.size() >= 2) band = bootstrap_ci(values, 0.95, derive_seed(seed, {n, ki}));
        curve.x.push_back(static_cast<double>(n));
        curve.mean.push_back(mean);
        curve.lower.push_back(band.lower);
        curve.upper.push_back(band.upper);
      }
      curves.push_back(std::move(curve));
    }
    const auto path = dir / ("perplexity_vs_n_k" + detail::fmt(k) + ".svg");
    detail::write_curves_svg(curves, k, path);
    written.push_back(path);
    ++ki;
  }
  return written;
}

}  // namespace dispost::harness
