#include "edgefield/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "edgefield/csv.hpp"
#include "edgefield/prior.hpp"
#include "edgefield/rng.hpp"

namespace edgefield {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_positive_int(const std::string& key, const std::string& v) {
  long long x = 0;
  try {
    x = csv::parse_int(v);
  } catch (const ValidationError&) {
    throw ValidationError("scenario key '" + key + "' expects an integer, got '" + v + "'");
  }
  if (x < 1 || x > 1'000'000) throw ValidationError("scenario key '" + key + "' out of range");
  return static_cast<int>(x);
}

double parse_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  try {
    x = csv::parse_double(v);
  } catch (const ValidationError&) {
    throw ValidationError("scenario key '" + key + "' expects a number, got '" + v + "'");
  }
  if (!std::isfinite(x)) throw ValidationError("scenario key '" + key + "' must be finite");
  return x;
}

}  // namespace

std::string format_coords(const Coordinates& c) {
  std::string out = "id,x,y\n";
  for (int i = 0; i < c.size(); ++i)
    out += std::to_string(i) + "," + csv::format_double(c.x[i]) + "," + csv::format_double(c.y[i]) + "\n";
  return out;
}

Coordinates parse_coords(const std::string& text, int n_regions) {
  const auto t = csv::parse(text);
  const int id = t.column("id"), xc = t.column("x"), yc = t.column("y");
  if (id < 0 || xc < 0 || yc < 0) throw ValidationError("coordinates header must contain id,x,y");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Coordinates c{std::vector<double>(n_regions, nan), std::vector<double>(n_regions, nan)};
  for (const auto& row : t.rows) {
    const auto i = csv::parse_int(row[id]);
    if (i < 0 || i >= n_regions) throw ValidationError("coordinate id " + row[id] + " out of range");
    c.x[i] = csv::parse_double(row[xc]);
    c.y[i] = csv::parse_double(row[yc]);
  }
  for (int i = 0; i < n_regions; ++i)
    if (!std::isfinite(c.x[i]) || !std::isfinite(c.y[i]))
      throw ValidationError("missing coordinate for region " + std::to_string(i));
  return c;
}

Coordinates load_coords(const std::filesystem::path& path, int n_regions) {
  return parse_coords(csv::read_file(path), n_regions);
}

void Scenario::validate() const {
  if (graph_kind == GraphKind::lattice && (rows < 2 || cols < 2))
    throw ValidationError("lattice needs rows, cols >= 2");
  if (graph_kind == GraphKind::irregular && nodes < 3) throw ValidationError("irregular graph needs >= 3 nodes");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("scenario gamma must lie in (0, 1)");
  if (!(sigma_theta2 > 0.0)) throw ValidationError("sigma_theta2 must be positive");
  if (!(expected > 0.0)) throw ValidationError("expected counts must be positive");
  if (eta_scale < 0.0) throw ValidationError("eta_scale must be nonnegative");
}

std::string Scenario::format() const {
  std::ostringstream os;
  if (graph_kind == GraphKind::lattice) {
    os << "graph = lattice\nrows = " << rows << "\ncols = " << cols << "\n";
  } else {
    os << "graph = irregular\nnodes = " << nodes << "\ngraph_seed = " << graph_seed << "\n";
  }
  os << "gradient = " << csv::format_double(gradient) << "\n";
  os << "band_threshold = " << csv::format_double(band_threshold) << "\n";
  os << "eta_scale = " << csv::format_double(eta_scale) << "\n";
  os << "alpha = " << csv::format_double(alpha) << "\n";
  if (!beta.empty()) {
    os << "beta = ";
    for (std::size_t j = 0; j < beta.size(); ++j) os << (j ? "," : "") << csv::format_double(beta[j]);
    os << "\n";
  }
  os << "gamma = " << csv::format_double(gamma) << "\n";
  os << "sigma_theta2 = " << csv::format_double(sigma_theta2) << "\n";
  os << "expected = " << csv::format_double(expected) << "\n";
  return os.str();
}

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("scenario line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key == "graph") {
      if (v == "lattice") s.graph_kind = GraphKind::lattice;
      else if (v == "irregular") s.graph_kind = GraphKind::irregular;
      else throw ValidationError("scenario graph must be lattice or irregular");
    } else if (key == "rows") s.rows = parse_positive_int(key, v);
    else if (key == "cols") s.cols = parse_positive_int(key, v);
    else if (key == "nodes") s.nodes = parse_positive_int(key, v);
    else if (key == "graph_seed") s.graph_seed = static_cast<std::uint64_t>(csv::parse_int(v));
    else if (key == "gradient") s.gradient = parse_real(key, v);
    else if (key == "band_threshold") s.band_threshold = parse_real(key, v);
    else if (key == "eta_scale") s.eta_scale = parse_real(key, v);
    else if (key == "alpha") s.alpha = parse_real(key, v);
    else if (key == "beta") {
      s.beta.clear();
      std::istringstream parts(v);
      std::string tok;
      while (std::getline(parts, tok, ',')) s.beta.push_back(parse_real(key, trim(tok)));
    } else if (key == "gamma") s.gamma = parse_real(key, v);
    else if (key == "sigma_theta2") s.sigma_theta2 = parse_real(key, v);
    else if (key == "expected") s.expected = parse_real(key, v);
    else throw ValidationError("unknown scenario key '" + key + "'");
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(csv::read_file(path)); }

PlacedGraph make_lattice_graph(int rows, int cols) {
  if (rows < 2 || cols < 2) throw ValidationError("lattice needs rows, cols >= 2");
  std::vector<Edge> edges;
  Coordinates c;
  for (int r = 0; r < rows; ++r) {
    for (int col = 0; col < cols; ++col) {
      const int id = r * cols + col;
      c.x.push_back(static_cast<double>(col) / (cols - 1));
      c.y.push_back(static_cast<double>(r) / (rows - 1));
      if (col + 1 < cols) edges.push_back({id, id + 1});
      if (r + 1 < rows) edges.push_back({id, id + cols});
    }
  }
  return {ArealGraph::from_edges(std::move(edges), rows * cols), std::move(c)};
}

PlacedGraph make_irregular_graph(int n, std::uint64_t seed) {
  if (n < 3) throw ValidationError("irregular graph needs >= 3 nodes");
  auto engine = rng::substream(seed, rng::Domain::irregular_graph, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Coordinates c;
  for (int i = 0; i < n; ++i) {
    c.x.push_back(unif(engine));
    c.y.push_back(unif(engine));
  }
  // Gabriel: (i, j) is an edge when no other point lies strictly inside the
  // circle with diameter ij.
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double mx = 0.5 * (c.x[i] + c.x[j]), my = 0.5 * (c.y[i] + c.y[j]);
      const double r2 = 0.25 * ((c.x[i] - c.x[j]) * (c.x[i] - c.x[j]) + (c.y[i] - c.y[j]) * (c.y[i] - c.y[j]));
      bool empty = true;
      for (int k = 0; k < n && empty; ++k) {
        if (k == i || k == j) continue;
        const double d2 = (c.x[k] - mx) * (c.x[k] - mx) + (c.y[k] - my) * (c.y[k] - my);
        if (d2 < r2) empty = false;
      }
      if (empty) edges.push_back({i, j});
    }
  }
  return {ArealGraph::from_edges(std::move(edges), n), std::move(c)};
}

PlacedGraph make_scenario_graph(const Scenario& s) {
  return s.graph_kind == GraphKind::lattice ? make_lattice_graph(s.rows, s.cols)
                                            : make_irregular_graph(s.nodes, s.graph_seed);
}

std::vector<int> skew_band_edges(const ArealGraph& g, const Coordinates& c, double threshold) {
  if (c.size() != g.num_nodes()) throw ValidationError("coordinates do not match the graph");
  std::vector<int> band;
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges()[e];
    const double lo = std::min(c.y[u], c.y[v]), hi = std::max(c.y[u], c.y[v]);
    if (lo < threshold && hi > threshold) band.push_back(e);
  }
  return band;
}

TrueField gen_gradient_skew_field(const SpatialStructure& s, const Coordinates& c, const Scenario& sc,
                                  std::uint64_t seed) {
  const auto band = skew_band_edges(s.graph, c, sc.band_threshold);
  if (band.empty()) throw ValidationError("skew band selects no edges");
  TrueField f;
  f.eta = Eigen::VectorXd::Zero(s.p());
  for (int e : band) f.eta(e) = sc.eta_scale;

  const double ybar = std::accumulate(c.y.begin(), c.y.end(), 0.0) / c.size();
  f.trend.resize(s.n());
  for (int i = 0; i < s.n(); ++i) f.trend(i) = sc.gradient * (c.y[i] - ybar);

  RenegeSkPrior prior{sc.gamma, sc.sigma_theta2, f.eta, kSkewCentering};
  const FieldSimulator sim(prior, s);
  const auto d = sim.draw(seed, 0);
  f.rho = d.rho;
  f.u = d.u.value_or(0.0);
  f.theta = f.trend + d.theta;
  return f;
}

SyntheticDataset generate_synthetic(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  SyntheticDataset out;
  out.placed = make_scenario_graph(sc);
  const auto s = SpatialStructure::build(out.placed.graph);
  out.band = skew_band_edges(s.graph, out.placed.coords, sc.band_threshold);
  out.truth = gen_gradient_skew_field(s, out.placed.coords, sc, seed);

  const int n = s.n();
  const int k = static_cast<int>(sc.beta.size());
  auto engine = rng::substream(seed, rng::Domain::counts, 0);
  Dataset& d = out.data;
  d.x = Eigen::MatrixXd::Zero(n, k);
  if (k > 0) {
    auto xeng = rng::substream(seed, rng::Domain::counts, 1);
    std::normal_distribution<double> normal;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) d.x(i, j) = normal(xeng);
  }
  d.expected = Eigen::VectorXd::Constant(n, sc.expected);
  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(sc.beta.data(), k);
  out.psi = (Eigen::VectorXd::Constant(n, sc.alpha) + d.x * beta + d.expected.array().log().matrix() +
             out.truth.theta);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    std::poisson_distribution<long long> pois(std::exp(out.psi(i)));
    d.y(i) = static_cast<double>(pois(engine));
  }
  return out;
}

ReplicationResult run_replication(const Scenario& sc, const std::vector<Variant>& models,
                                  const std::vector<std::uint64_t>& seeds, const SamplerConfig& config,
                                  const ModelSpec& base_spec) {
  if (models.empty()) throw ValidationError("replication needs at least one model");
  if (seeds.empty()) throw ValidationError("replication needs at least one seed");
  ReplicationResult r;
  r.seeds = seeds;
  r.models = models;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const char* crit : {"DIC", "WAIC", "LOOIC", "RMSE"}) r.wins[crit] = std::vector<int>(models.size(), 0);

  for (auto seed : seeds) {
    const auto syn = generate_synthetic(sc, seed);
    const auto s = SpatialStructure::build(syn.placed.graph);
    CriteriaTable table;
    std::vector<bool> failed;
    std::vector<std::string> errors;
    std::vector<Diagnostics> diags;
    for (auto v : models) {
      CriteriaRow row{variant_name(v), nan, nan, nan, nan, nan, nan, 0};
      try {
        ModelSpec spec = base_spec;
        spec.variant = v;
        const PoissonModel model(s, syn.data, spec);
        SamplerConfig cfg = config;
        cfg.seed = seed;
        if (config.progress) {
          cfg.progress = [&, seed, v](const std::string& msg) {
            config.progress("seed " + std::to_string(seed) + " " + variant_name(v) + ": " + msg);
          };
        }
        auto fit = run_chains(model, cfg);
        row = compute_criteria(variant_name(v), fit.draws, syn.data);
        diags.push_back(std::move(fit.diagnostics));
        failed.push_back(false);
        errors.emplace_back();
      } catch (const std::exception& e) {
        diags.emplace_back();
        failed.push_back(true);
        errors.emplace_back(e.what());
      }
      table.push_back(row);
    }
    auto tally = [&](const std::string& crit, auto value) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < models.size(); ++m)
        if (!failed[m] && std::isfinite(value(table[m]))) best = std::min(best, value(table[m]));
      for (std::size_t m = 0; m < models.size(); ++m)
        if (!failed[m] && value(table[m]) == best) ++r.wins[crit][m];
    };
    tally("DIC", [](const CriteriaRow& x) { return x.dic; });
    tally("WAIC", [](const CriteriaRow& x) { return x.waic; });
    tally("LOOIC", [](const CriteriaRow& x) { return x.looic; });
    tally("RMSE", [](const CriteriaRow& x) { return x.rmse; });
    r.tables.push_back(std::move(table));
    r.failed.push_back(std::move(failed));
    r.errors.push_back(std::move(errors));
    r.diagnostics.push_back(std::move(diags));
  }
  return r;
}

std::string format_replication(const ReplicationResult& r) {
  std::string out = "seed,model,status,Dbar,pD,DIC,WAIC,LOOIC,RMSE\n";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      const auto& row = r.tables[i][m];
      out += std::to_string(r.seeds[i]) + "," + variant_name(r.models[m]) + "," + (r.failed[i][m] ? "failed" : "ok");
      for (double v : {row.dbar, row.pd, row.dic, row.waic, row.looic, row.rmse}) out += "," + csv::format_double(v);
      out += "\n";
    }
  }
  return out;
}

std::string format_wins(const ReplicationResult& r) {
  std::string out = "criterion";
  for (auto v : r.models) out += "," + variant_name(v);
  out += "\n";
  for (const char* crit : {"DIC", "WAIC", "LOOIC", "RMSE"}) {
    out += crit;
    for (int w : r.wins.at(crit)) out += "," + std::to_string(w);
    out += "\n";
  }
  return out;
}

}  // namespace edgefield
