#include "edgefield/render.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "edgefield/csv.hpp"

namespace edgefield {

namespace {

std::pair<double, double> value_range(const Eigen::VectorXd& v, const std::optional<std::pair<double, double>>& r) {
  if (r) return *r;
  if (v.size() == 0) return {0.0, 0.0};
  return {v.minCoeff(), v.maxCoeff()};
}

std::string rgb(const Rgb& c) {
  return "rgb(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + ")";
}

std::string num(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

}  // namespace

double color_position(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.5;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

Rgb interpolate_color(const Rgb& low, const Rgb& high, double t) {
  Rgb out;
  for (int k = 0; k < 3; ++k) out[k] = static_cast<int>(std::lround(low[k] + t * (high[k] - low[k])));
  return out;
}

std::string render_field(const Eigen::VectorXd& field, const Coordinates& coords, const RenderOptions& opt,
                         const ArealGraph* graph, const Eigen::VectorXd* edge_values) {
  const int n = static_cast<int>(field.size());
  if (coords.size() < n) throw ValidationError("missing coordinate for region " + std::to_string(coords.size()));
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(coords.x[i]) || !std::isfinite(coords.y[i]))
      throw ValidationError("missing coordinate for region " + std::to_string(i));
  if (!field.allFinite()) throw ValidationError("field values must be finite");
  if (graph && graph->num_nodes() != n) throw ValidationError("graph and field sizes differ");
  if (edge_values && (!graph || edge_values->size() != graph->num_edges()))
    throw ValidationError("edge values need a graph with matching edge count");
  if (!(opt.size > 0) || !(opt.margin >= 0.0) || 2.0 * opt.margin >= opt.size)
    throw ValidationError("invalid canvas size or margin");

  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  if (n > 0) {
    xmin = *std::min_element(coords.x.begin(), coords.x.begin() + n);
    xmax = *std::max_element(coords.x.begin(), coords.x.begin() + n);
    ymin = *std::min_element(coords.y.begin(), coords.y.begin() + n);
    ymax = *std::max_element(coords.y.begin(), coords.y.begin() + n);
  }
  const double span = std::max(xmax - xmin, ymax - ymin);
  const double usable = opt.size - 2.0 * opt.margin;
  const double scale = span > 0.0 ? usable / span : 0.0;
  const double xoff = opt.margin + 0.5 * (usable - scale * (xmax - xmin));
  const double yoff = opt.margin + 0.5 * (usable - scale * (ymax - ymin));
  auto px = [&](int i) { return xoff + scale * (coords.x[i] - xmin); };
  auto py = [&](int i) { return opt.size - (yoff + scale * (coords.y[i] - ymin)); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.size << "\" height=\"" << opt.size
     << "\" viewBox=\"0 0 " << opt.size << " " << opt.size << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (graph) {
    os << "<g stroke-linecap=\"round\">\n";
    const auto [elo, ehi] = edge_values ? value_range(*edge_values, std::nullopt) : std::pair{0.0, 0.0};
    for (int e = 0; e < graph->num_edges(); ++e) {
      const auto [u, v] = graph->edges()[e];
      const std::string stroke =
          edge_values ? rgb(interpolate_color(opt.low, opt.high, color_position((*edge_values)(e), elo, ehi)))
                      : "rgb(190,190,190)";
      os << "<line x1=\"" << num(px(u)) << "\" y1=\"" << num(py(u)) << "\" x2=\"" << num(px(v)) << "\" y2=\""
         << num(py(v)) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(opt.edge_width) << "\"/>\n";
    }
    os << "</g>\n";
  }
  const auto [lo, hi] = value_range(field, opt.range);
  os << "<g stroke=\"black\" stroke-width=\"0.5\">\n";
  for (int i = 0; i < n; ++i) {
    os << "<circle id=\"n" << i << "\" cx=\"" << num(px(i)) << "\" cy=\"" << num(py(i)) << "\" r=\""
       << num(opt.node_radius) << "\" fill=\"" << rgb(interpolate_color(opt.low, opt.high, color_position(field(i), lo, hi)))
       << "\"><title>" << i << ": " << csv::format_double(field(i)) << "</title></circle>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace edgefield
