#include "edgefield/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "edgefield/csv.hpp"

namespace edgefield {

namespace {

constexpr double kClampTolerance = 1e-9;

std::string fmt_interval(const SpectralCache& s) {
  std::ostringstream os;
  os.precision(10);
  os << "(" << s.lower << ", " << s.upper << ")";
  return os.str();
}

}  // namespace

ArealGraph ArealGraph::from_edges(std::vector<Edge> edges, std::optional<int> num_nodes) {
  if (edges.empty()) throw ValidationError("empty edge set");
  int max_id = -1;
  for (auto& e : edges) {
    if (e.u < 0 || e.v < 0) throw ValidationError("negative region id");
    if (e.u == e.v) throw ValidationError("self-loop at region " + std::to_string(e.u));
    if (e.u > e.v) std::swap(e.u, e.v);
    max_id = std::max(max_id, e.v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  ArealGraph g;
  g.n_ = num_nodes.value_or(max_id + 1);
  if (g.n_ <= max_id)
    throw ValidationError("region id " + std::to_string(max_id) + " exceeds node count " +
                          std::to_string(g.n_));
  g.edges_ = std::move(edges);
  g.degrees_.assign(g.n_, 0);
  g.incident_.assign(g.n_, {});
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges_[e];
    ++g.degrees_[u];
    ++g.degrees_[v];
    g.incident_[u].push_back(e);
    g.incident_[v].push_back(e);
  }
  return g;
}

SparseMatrix ArealGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * edges_.size());
  for (const auto& [u, v] : edges_) {
    trip.emplace_back(u, v, 1.0);
    trip.emplace_back(v, u, 1.0);
  }
  SparseMatrix a(n_, n_);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

Eigen::VectorXd ArealGraph::degree_vector() const {
  Eigen::VectorXd d(n_);
  for (int i = 0; i < n_; ++i) d(i) = degrees_[i];
  return d;
}

int ArealGraph::edge_index(int u, int v) const {
  if (u > v) std::swap(u, v);
  const Edge key{u, v};
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key) return -1;
  return static_cast<int>(it - edges_.begin());
}

void DependenceKernel::check(double gamma) const {
  if (!std::isfinite(gamma) || !spectral.contains(gamma))
    throw ValidationError("dependence parameter " + csv::format_double(gamma) +
                          " outside validity interval " + fmt_interval(spectral));
}

Eigen::VectorXd DependenceKernel::apply(double gamma, const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = degrees.cwiseProduct(x);
  out.noalias() -= gamma * (adjacency * x);
  return out;
}

double DependenceKernel::quadratic(double gamma, const Eigen::VectorXd& x) const {
  return x.dot(degrees.cwiseProduct(x)) - gamma * x.dot(adjacency * x);
}

double DependenceKernel::log_det(double gamma) const {
  double acc = degrees.array().log().sum();
  for (Eigen::Index i = 0; i < spectral.lambdas.size(); ++i)
    acc += std::log1p(-gamma * spectral.lambdas(i));
  return acc;
}

double DependenceKernel::log_det_derivative(double gamma) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < spectral.lambdas.size(); ++i) {
    const double l = spectral.lambdas(i);
    acc -= l / (1.0 - gamma * l);
  }
  return acc;
}

Eigen::MatrixXd DependenceKernel::dense(double gamma) const {
  Eigen::MatrixXd q = -gamma * Eigen::MatrixXd(adjacency);
  q.diagonal() += degrees;
  return q;
}

IncidenceMatrix build_incidence(const ArealGraph& g) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * g.edges().size());
  for (int e = 0; e < g.num_edges(); ++e) {
    trip.emplace_back(g.edges()[e].u, e, 1.0);
    trip.emplace_back(g.edges()[e].v, e, 1.0);
  }
  IncidenceMatrix c(g.num_nodes(), g.num_edges());
  c.setFromTriplets(trip.begin(), trip.end());
  return c;
}

SpectralCache spectral_decompose(const Eigen::VectorXd& degrees, const SparseMatrix& adjacency) {
  const Eigen::Index q = degrees.size();
  if (adjacency.rows() != q || adjacency.cols() != q)
    throw ValidationError("degree and adjacency dimensions differ");
  for (Eigen::Index i = 0; i < q; ++i)
    if (!(degrees(i) > 0.0)) throw ValidationError("zero degree at index " + std::to_string(i));

  const Eigen::VectorXd inv_sqrt = degrees.array().rsqrt();
  Eigen::MatrixXd normalized = inv_sqrt.asDiagonal() * Eigen::MatrixXd(adjacency) * inv_sqrt.asDiagonal();
  // symmetrize against rounding before the symmetric solver
  normalized = 0.5 * (normalized + normalized.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(normalized, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigen-decomposition failed");

  SpectralCache cache;
  cache.lambdas = solver.eigenvalues();
  for (Eigen::Index i = 0; i < q; ++i) {
    double& l = cache.lambdas(i);
    if (std::abs(l - 1.0) < kClampTolerance || l > 1.0) l = std::min(l, 1.0);
    if (std::abs(l + 1.0) < kClampTolerance || l < -1.0) l = std::max(l, -1.0);
  }
  const double lmin = cache.lambda_min();
  const double lmax = cache.lambda_max();
  cache.lower = lmin < 0.0 ? 1.0 / lmin : -std::numeric_limits<double>::infinity();
  cache.upper = lmax > 0.0 ? 1.0 / lmax : std::numeric_limits<double>::infinity();
  return cache;
}

LineGraphStructure build_line_graph(const ArealGraph& g) {
  const int p = g.num_edges();
  for (int e = 0; e < p; ++e) {
    const auto [u, v] = g.edges()[e];
    if (g.degrees()[u] == 1 && g.degrees()[v] == 1)
      throw ValidationError("isolated edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") has no neighbours in the line graph");
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& inc : g.incident_edges())
    for (std::size_t a = 0; a < inc.size(); ++a)
      for (std::size_t b = a + 1; b < inc.size(); ++b) {
        trip.emplace_back(inc[a], inc[b], 1.0);
        trip.emplace_back(inc[b], inc[a], 1.0);
      }

  LineGraphStructure lg;
  lg.adjacency.resize(p, p);
  lg.adjacency.setFromTriplets(trip.begin(), trip.end());
  lg.degrees.resize(p);
  for (int e = 0; e < p; ++e) {
    const auto [u, v] = g.edges()[e];
    lg.degrees(e) = g.degrees()[u] + g.degrees()[v] - 2;
  }
  lg.spectral = spectral_decompose(lg.degrees, lg.adjacency);
  return lg;
}

DependenceKernel build_node_kernel(const ArealGraph& g) {
  DependenceKernel k;
  k.adjacency = g.adjacency();
  k.degrees = g.degree_vector();
  k.spectral = spectral_decompose(k.degrees, k.adjacency);
  return k;
}

double precision_quadratic(const LineGraphStructure& lg, double gamma, const Eigen::VectorXd& x) {
  lg.check(gamma);
  if (x.size() != lg.size()) throw ValidationError("vector length does not match line graph");
  return lg.quadratic(gamma, x);
}

std::vector<int> connected_components(const SparseMatrix& adjacency, int* count) {
  const int q = static_cast<int>(adjacency.rows());
  std::vector<int> label(q, -1);
  int next = 0;
  for (int s = 0; s < q; ++s) {
    if (label[s] >= 0) continue;
    std::queue<int> frontier;
    frontier.push(s);
    label[s] = next;
    while (!frontier.empty()) {
      const int i = frontier.front();
      frontier.pop();
      for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
        const int j = static_cast<int>(it.index());
        if (label[j] < 0) {
          label[j] = next;
          frontier.push(j);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return label;
}

SpatialStructure SpatialStructure::build(ArealGraph g) {
  SpatialStructure s;
  s.incidence = build_incidence(g);
  s.line = build_line_graph(g);
  const auto& deg = g.degrees();
  if (std::all_of(deg.begin(), deg.end(), [](int d) { return d > 0; })) s.node = build_node_kernel(g);
  s.graph = std::move(g);
  return s;
}

ArealGraph parse_edge_list(const std::string& text) {
  const auto table = csv::parse(text);
  const int src = table.column("src");
  const int dst = table.column("dst");
  if (src < 0 || dst < 0 || table.header.size() != 2)
    throw ValidationError("edge list header must be `src,dst`");
  std::vector<Edge> edges;
  edges.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const auto u = csv::parse_int(row[src]);
    const auto v = csv::parse_int(row[dst]);
    if (u < 0 || v < 0) throw ValidationError("region ids must be nonnegative");
    if (u > std::numeric_limits<int>::max() || v > std::numeric_limits<int>::max())
      throw ValidationError("region id too large");
    edges.push_back({static_cast<int>(u), static_cast<int>(v)});
  }
  return ArealGraph::from_edges(std::move(edges));
}

ArealGraph load_edge_list(const std::filesystem::path& path) {
  return parse_edge_list(csv::read_file(path));
}

std::string format_edge_list(const ArealGraph& g) {
  std::string out = "src,dst\n";
  for (const auto& [u, v] : g.edges()) out += std::to_string(u) + "," + std::to_string(v) + "\n";
  return out;
}

std::string graph_summary(const SpatialStructure& s) {
  std::ostringstream os;
  os.precision(10);
  os << "regions (n): " << s.n() << "\n";
  os << "edges (p): " << s.p() << "\n";

  auto histogram = [&os](const Eigen::VectorXd& deg, const char* title) {
    std::map<int, int> h;
    for (Eigen::Index i = 0; i < deg.size(); ++i) ++h[static_cast<int>(deg(i))];
    os << title << ":";
    for (const auto& [d, c] : h) os << " " << d << ":" << c;
    os << "\n";
  };
  histogram(s.graph.degree_vector(), "region degree histogram (degree:count)");
  histogram(s.line.degrees, "line-graph degree histogram (degree:count)");

  int comps = 0;
  connected_components(s.graph.adjacency(), &comps);
  os << "connected components: " << comps << "\n";
  os << "line-graph lambda range: [" << s.line.spectral.lambda_min() << ", "
     << s.line.spectral.lambda_max() << "]\n";
  os << "gamma validity interval: " << fmt_interval(s.line.spectral) << "\n";
  if (s.node)
    os << "varsigma validity interval: " << fmt_interval(s.node->spectral) << "\n";
  else
    os << "varsigma validity interval: undefined (region without neighbours)\n";
  return os.str();
}

}  // namespace edgefield
