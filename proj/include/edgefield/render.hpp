#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "edgefield/graph.hpp"
#include "edgefield/synth.hpp"

namespace edgefield {

using Rgb = std::array<int, 3>;

struct RenderOptions {
  Rgb low{33, 102, 172};
  Rgb high{178, 24, 43};
  double node_radius = 8.0;
  double edge_width = 3.0;
  int size = 800;
  double margin = 40.0;
  // Value range mapped onto [low, high]; defaults to the data range.
  std::optional<std::pair<double, double>> range;
};

// Position of v in [lo, hi] clamped to [0, 1]; a degenerate range maps to 0.5.
double color_position(double v, double lo, double hi);
Rgb interpolate_color(const Rgb& low, const Rgb& high, double t);

// One circle per node on an 800 x 800 canvas (y grows upward). With a graph,
// edges are drawn as segments underneath: coloured by `edge_values` on their
// own range when given, grey otherwise.
std::string render_field(const Eigen::VectorXd& field, const Coordinates& coords, const RenderOptions& opt = {},
                         const ArealGraph* graph = nullptr, const Eigen::VectorXd* edge_values = nullptr);

}  // namespace edgefield
