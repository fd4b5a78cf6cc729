#pragma once

// Independent oracles shared by the unit tests and the acceptance runner.
// Nothing here calls into the library's own algorithms for the quantity it
// checks: line graphs come from a double loop over edge pairs, determinants
// from dense factorizations, LOO from conjugate algebra.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edgefield/graph.hpp"

namespace support {

using edgefield::ArealGraph;
using edgefield::Edge;

// Five regions, seven shared borders.
inline ArealGraph map_graph() {
  return ArealGraph::from_edges({{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}});
}

inline ArealGraph path_graph(int n) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return ArealGraph::from_edges(e);
}

// Random spanning tree plus extra chords; connected, simple, n >= 3.
inline ArealGraph random_connected_graph(int n, std::mt19937_64& rng, double chord_prob = 0.25) {
  std::set<std::pair<int, int>> edges;
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> pick(0, v - 1);
    const int u = pick(rng);
    edges.insert({u, v});
  }
  std::bernoulli_distribution chord(chord_prob);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (chord(rng)) edges.insert({u, v});
  std::vector<Edge> out;
  for (const auto& [u, v] : edges) out.push_back({u, v});
  return ArealGraph::from_edges(out, n);
}

// Line-graph adjacency by testing every pair of edges for a shared endpoint.
inline Eigen::MatrixXd brute_line_adjacency(const ArealGraph& g) {
  const auto& e = g.edges();
  const int p = static_cast<int>(e.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j) continue;
      const bool share = e[i].u == e[j].u || e[i].u == e[j].v || e[i].v == e[j].u || e[i].v == e[j].v;
      if (share) a(i, j) = 1.0;
    }
  return a;
}

inline double dense_log_det(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  const Eigen::MatrixXd l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

inline double sample_skewness(const Eigen::VectorXd& x) {
  const double m = x.mean();
  const Eigen::ArrayXd d = x.array() - m;
  const double m2 = d.square().mean();
  const double m3 = d.cube().mean();
  return m3 / std::pow(m2, 1.5);
}

// Skewness of c U + s Z with U half-normal and Z standard normal.
inline double projected_skewness(double c, double s) {
  const double delta = c / std::sqrt(c * c + s * s);
  const double k = delta * std::sqrt(2.0 / std::numbers::pi);
  return (4.0 - std::numbers::pi) / 2.0 * k * k * k / std::pow(1.0 - 2.0 * delta * delta / std::numbers::pi, 1.5);
}

// Normal model y_i ~ N(mu, 1), mu ~ N(0, prior_var). Leaving out y_i gives a
// normal posterior for mu and a normal predictive for y_i, so LOO is exact.
struct ConjugateToy {
  std::vector<double> y{1.0};
  double prior_var = 0.5;

  int n() const { return static_cast<int>(y.size()); }
  double sum() const {
    double s = 0.0;
    for (double v : y) s += v;
    return s;
  }
  double post_var() const { return 1.0 / (n() + 1.0 / prior_var); }
  double post_mean() const { return post_var() * sum(); }
  double exact_looic() const {
    double elpd = 0.0;
    for (double yi : y) {
      const double prec = (n() - 1) + 1.0 / prior_var;
      const double m = (sum() - yi) / prec;
      const double v = 1.0 + 1.0 / prec;
      elpd += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * (yi - m) * (yi - m) / v;
    }
    return -2.0 * elpd;
  }
  // draws x n pointwise log-likelihood matrix
  Eigen::MatrixXd pointwise(int draws, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> mu(post_mean(), std::sqrt(post_var()));
    Eigen::MatrixXd ll(draws, n());
    for (int s = 0; s < draws; ++s) {
      const double m = mu(rng);
      for (int i = 0; i < n(); ++i) ll(s, i) = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * (y[i] - m) * (y[i] - m);
    }
    return ll;
  }
};

// WAIC of the two-draw, one-observation case with log-likelihoods (-1, -2).
inline double two_draw_waic() {
  const double lppd = std::log((std::exp(-1.0) + std::exp(-2.0)) / 2.0);
  const double p_waic = 0.5;  // sample variance of (-1, -2)
  return -2.0 * (lppd - p_waic);
}

// Reference comparison rows: simulation study, then lung and colon. The
// second table reports no LOOIC.
struct ReferenceRow {
  const char* table;
  const char* model;
  double dbar, pd, dic, waic, looic, rmse;
};

inline std::vector<ReferenceRow> reference_rows() {
  const double na = std::numeric_limits<double>::quiet_NaN();
  return {
      {"simulation", "CAR", 614.29, 125.21, 739.50, 687.41, 715.76, 2.57},
      {"simulation", "RENeGe", 580.82, 93.86, 674.68, 642.70, 671.94, 2.45},
      {"simulation", "RENeGe-Skew", 583.51, 50.87, 634.38, 631.30, 644.32, 2.42},
      {"lung", "CAR", 1475.51, 158.73, 1634.24, 1587.09, na, 35.64},
      {"lung", "RENeGe", 1476.69, 156.06, 1632.75, 1587.55, na, 35.54},
      {"lung", "RENeGe-sk", 1479.39, 103.13, 1582.52, 1558.68, na, 36.34},
      {"colon", "CAR", 1161.52, 178.23, 1339.74, 1279.57, na, 19.32},
      {"colon", "RENeGe", 1158.40, 174.58, 1332.99, 1273.64, na, 19.66},
      {"colon", "RENeGe-sk", 1158.17, 183.10, 1341.28, 1271.04, na, 19.28},
  };
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("edgefield_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
