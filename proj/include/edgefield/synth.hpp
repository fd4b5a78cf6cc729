#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgefield/criteria.hpp"
#include "edgefield/graph.hpp"
#include "edgefield/model.hpp"
#include "edgefield/sampler.hpp"

namespace edgefield {

// Node positions indexed by region id.
struct Coordinates {
  std::vector<double> x;
  std::vector<double> y;

  int size() const { return static_cast<int>(x.size()); }
};

// `id,x,y`
std::string format_coords(const Coordinates& c);
Coordinates parse_coords(const std::string& text, int n_regions);
Coordinates load_coords(const std::filesystem::path& path, int n_regions);

enum class GraphKind { lattice, irregular };

// Plain-text `key = value` lines; `#` starts a comment. Unknown keys are rejected.
//   graph = lattice | irregular     rows, cols       (lattice)
//   nodes, graph_seed               (irregular)
//   gradient, band_threshold, eta_scale
//   alpha, beta (comma list), gamma, sigma_theta2, expected
struct Scenario {
  GraphKind graph_kind = GraphKind::lattice;
  int rows = 12;
  int cols = 13;
  int nodes = 159;
  std::uint64_t graph_seed = 1;
  double gradient = 1.0;  // trend = gradient * (y_i - mean y)
  double band_threshold = 0.3;
  double eta_scale = 3.0;
  double alpha = 0.5;
  std::vector<double> beta;
  double gamma = 0.7;
  double sigma_theta2 = 0.25;
  double expected = 50.0;

  void validate() const;
  std::string format() const;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

struct PlacedGraph {
  ArealGraph graph;
  Coordinates coords;
};

// 4-neighbour grid, node id = r * cols + c at (c / (cols - 1), r / (rows - 1)).
PlacedGraph make_lattice_graph(int rows, int cols);

// Gabriel graph of n uniform points in the unit square (a connected planar
// subgraph of the Delaunay triangulation). Points come from the
// irregular_graph stream of `seed`.
PlacedGraph make_irregular_graph(int n, std::uint64_t seed);

PlacedGraph make_scenario_graph(const Scenario& s);

// Edges whose endpoint y-coordinates lie on opposite sides of `threshold`.
std::vector<int> skew_band_edges(const ArealGraph& g, const Coordinates& c, double threshold);

struct TrueField {
  Eigen::VectorXd trend;  // node level
  Eigen::VectorXd theta;  // trend + C rho
  Eigen::VectorXd rho;
  Eigen::VectorXd eta;
  double u = 0.0;
};

// eta = eta_scale on the band edges and 0 elsewhere; one skew-normal edge
// prior draw (field_draw stream of `seed`, index 0) is added to the trend.
TrueField gen_gradient_skew_field(const SpatialStructure& s, const Coordinates& c, const Scenario& sc,
                                  std::uint64_t seed);

struct SyntheticDataset {
  PlacedGraph placed;
  Dataset data;
  TrueField truth;
  Eigen::VectorXd psi;  // true linear predictor
  std::vector<int> band;
};

// Counts y_i ~ Poisson(exp(psi_i)) from the counts stream of `seed`;
// covariates (when beta is set) are standard normal from the same stream.
SyntheticDataset generate_synthetic(const Scenario& sc, std::uint64_t seed);

struct ReplicationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<Variant> models;
  std::vector<CriteriaTable> tables;          // one per seed, one row per model
  std::vector<std::vector<bool>> failed;      // [seed][model]
  std::vector<std::vector<std::string>> errors;
  std::vector<std::vector<Diagnostics>> diagnostics;
  // criterion (DIC, WAIC, LOOIC, RMSE) -> wins per model
  std::map<std::string, std::vector<int>> wins;
};

// Seed s generates its dataset from s and samples with config.seed = s. A fit
// that throws marks its cell failed (NaN row) and the run continues.
ReplicationResult run_replication(const Scenario& sc, const std::vector<Variant>& models,
                                  const std::vector<std::uint64_t>& seeds, const SamplerConfig& config,
                                  const ModelSpec& base_spec = {});

// `seed,model,status,Dbar,pD,DIC,WAIC,LOOIC,RMSE`
std::string format_replication(const ReplicationResult& r);
// `criterion,<model>...` win counts
std::string format_wins(const ReplicationResult& r);

}  // namespace edgefield
