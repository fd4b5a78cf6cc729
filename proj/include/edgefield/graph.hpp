#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "edgefield/error.hpp"

namespace edgefield {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

// Region adjacency graph with canonical edge ordering: every edge is stored as
// (u, v) with u < v and the list is sorted lexicographically. Edge indices used
// everywhere else (columns of C, rows of A_e, eta, rho) refer to this order.
class ArealGraph {
 public:
  ArealGraph() = default;

  // Normalizes each pair to u < v, sorts and removes duplicates. When
  // `num_nodes` is absent it is taken as 1 + the largest id.
  static ArealGraph from_edges(std::vector<Edge> edges,
                               std::optional<int> num_nodes = std::nullopt);

  int num_nodes() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& degrees() const { return degrees_; }

  // Edge indices incident to each node, ascending.
  const std::vector<std::vector<int>>& incident_edges() const { return incident_; }

  SparseMatrix adjacency() const;
  Eigen::VectorXd degree_vector() const;

  // Index of edge (u, v) in canonical order, or -1.
  int edge_index(int u, int v) const;

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<int> degrees_;
  std::vector<std::vector<int>> incident_;
};

using IncidenceMatrix = SparseMatrix;

/// Eigenvalues of D^{-1/2} W D^{-1/2} and the open interval of dependence
/// parameters for which D - gamma W is positive definite.
struct SpectralCache {
  Eigen::VectorXd lambdas;  // ascending
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double gamma) const { return gamma > lower && gamma < upper; }
  double lambda_min() const { return lambdas.size() ? lambdas(0) : 0.0; }
  double lambda_max() const { return lambdas.size() ? lambdas(lambdas.size() - 1) : 0.0; }
};

// Degree/adjacency pair (D, W) with its spectral cache. Used both for the line
// graph (M_e, A_e) and for the region graph (M, A) of the CAR prior.
struct DependenceKernel {
  Eigen::VectorXd degrees;
  SparseMatrix adjacency;
  SpectralCache spectral;

  int size() const { return static_cast<int>(degrees.size()); }

  // Throws ValidationError unless gamma lies strictly inside the interval.
  void check(double gamma) const;

  // (D - gamma W) x
  Eigen::VectorXd apply(double gamma, const Eigen::VectorXd& x) const;
  double quadratic(double gamma, const Eigen::VectorXd& x) const;

  // log det(D - gamma W) = sum log d_i + sum log(1 - gamma lambda_i)
  double log_det(double gamma) const;
  // d/dgamma log det(D - gamma W) = -sum lambda_i / (1 - gamma lambda_i)
  double log_det_derivative(double gamma) const;

  Eigen::MatrixXd dense(double gamma) const;
};

using LineGraphStructure = DependenceKernel;

IncidenceMatrix build_incidence(const ArealGraph& g);

// Line graph L(G): nodes are the edges of G, adjacent when they share an
// endpoint. Rejects graphs with an isolated edge (both endpoints of degree 1).
LineGraphStructure build_line_graph(const ArealGraph& g);

// Region-graph kernel (M, A) for the CAR prior. Rejects isolated nodes.
DependenceKernel build_node_kernel(const ArealGraph& g);

SpectralCache spectral_decompose(const Eigen::VectorXd& degrees, const SparseMatrix& adjacency);

// x^T (M_e - gamma A_e) x, rejecting gamma outside the validity interval.
double precision_quadratic(const LineGraphStructure& lg, double gamma, const Eigen::VectorXd& x);

// Connected components of a symmetric adjacency; returns a label per node.
std::vector<int> connected_components(const SparseMatrix& adjacency, int* count = nullptr);

// Everything the priors and models need about one graph, built once.
struct SpatialStructure {
  ArealGraph graph;
  IncidenceMatrix incidence;
  LineGraphStructure line;
  std::optional<DependenceKernel> node;  // absent when a region has no neighbours

  static SpatialStructure build(ArealGraph g);

  int n() const { return graph.num_nodes(); }
  int p() const { return graph.num_edges(); }
};

// Edge list CSV with header `src,dst`.
ArealGraph load_edge_list(const std::filesystem::path& path);
ArealGraph parse_edge_list(const std::string& text);
std::string format_edge_list(const ArealGraph& g);

// Plain-text report: n, p, degree histograms, validity intervals.
std::string graph_summary(const SpatialStructure& s);

}  // namespace edgefield
