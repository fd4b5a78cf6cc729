#include "edgefield/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "edgefield/criteria.hpp"
#include "edgefield/csv.hpp"
#include "edgefield/graph.hpp"
#include "edgefield/model.hpp"
#include "edgefield/prior.hpp"
#include "edgefield/render.hpp"
#include "edgefield/sampler.hpp"
#include "edgefield/synth.hpp"

namespace edgefield {

namespace fs = std::filesystem;

namespace {

struct SamplerFlags {
  int chains = 4;
  int warmup = 1000;
  int samples = 1000;
  double target_accept = 0.8;
  int max_leapfrog = 512;
  double integration_time = 2.0;
  std::string metric = "dense";
  bool noncentered = false;

  void add(CLI::App* app) {
    app->add_option("--chains", chains, "Number of chains")->capture_default_str();
    app->add_option("--warmup", warmup, "Warmup iterations per chain")->capture_default_str();
    app->add_option("--samples", samples, "Retained iterations per chain")->capture_default_str();
    app->add_option("--target-accept", target_accept, "Step-size adaptation target")->capture_default_str();
    app->add_option("--max-leapfrog", max_leapfrog, "Cap on leapfrog steps per transition")->capture_default_str();
    app->add_option("--integration-time", integration_time, "Nominal trajectory length")->capture_default_str();
    app->add_option("--metric", metric, "Mass matrix: dense or diag")->capture_default_str();
    app->add_flag("--noncentered", noncentered, "Sample the latent block in whitened coordinates");
  }

  SamplerConfig config(std::uint64_t seed, bool quiet, std::ostream& err) const {
    SamplerConfig c;
    c.chains = chains;
    c.warmup = warmup;
    c.samples = samples;
    c.seed = seed;
    c.target_accept = target_accept;
    c.max_leapfrog = max_leapfrog;
    c.integration_time = integration_time;
    c.metric = parse_metric(metric);
    c.noncentered = noncentered;
    if (!quiet) c.progress = [&err](const std::string& m) { err << m << "\n"; };
    c.validate();
    return c;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ValidationError("file not found: " + p.string());
}

std::string row_csv(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv::format_double(v[i]);
  return s;
}

double median(Eigen::VectorXd v) {
  std::sort(v.data(), v.data() + v.size());
  const Eigen::Index n = v.size();
  return n % 2 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

std::string format_field_draws(const std::vector<FieldDraw>& draws, int n, int p, bool edges) {
  std::string out = "draw,u";
  if (edges)
    for (int e = 1; e <= p; ++e) out += ",rho." + std::to_string(e);
  for (int i = 1; i <= n; ++i) out += ",theta." + std::to_string(i);
  out += "\n";
  for (std::size_t d = 0; d < draws.size(); ++d) {
    out += std::to_string(d + 1) + "," + (draws[d].u ? csv::format_double(*draws[d].u) : "NA");
    for (Eigen::Index e = 0; e < draws[d].rho.size(); ++e) out += "," + csv::format_double(draws[d].rho(e));
    for (Eigen::Index i = 0; i < draws[d].theta.size(); ++i) out += "," + csv::format_double(draws[d].theta(i));
    out += "\n";
  }
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text, int expected, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) v.push_back(csv::parse_double(tok));
  if (static_cast<int>(v.size()) != expected)
    throw ValidationError(what + " needs " + std::to_string(expected) + " values, got " + std::to_string(v.size()));
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Column `column` of a CSV keyed by `key` (0-based ids), as a dense vector.
Eigen::VectorXd load_keyed_column(const fs::path& path, const std::string& key, const std::string& column, int size) {
  const auto t = csv::read(path);
  const int k = t.column(key), c = t.column(column);
  if (k < 0) throw ValidationError(path.string() + " lacks column " + key);
  if (c < 0) throw ValidationError(path.string() + " lacks column " + column);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(size, std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : t.rows) {
    const auto i = csv::parse_int(r[k]);
    if (i < 0 || i >= size) throw ValidationError(key + " " + r[k] + " out of range in " + path.string());
    v(i) = csv::parse_double(r[c]);
  }
  for (int i = 0; i < size; ++i)
    if (!std::isfinite(v(i))) throw ValidationError("missing " + key + " " + std::to_string(i) + " in " + path.string());
  return v;
}

std::string truth_nodes_csv(const SyntheticDataset& s) {
  std::string out = "id,trend,theta,psi\n";
  for (Eigen::Index i = 0; i < s.truth.theta.size(); ++i)
    out += std::to_string(i) + "," + row_csv({s.truth.trend(i), s.truth.theta(i), s.psi(i)}) + "\n";
  return out;
}

std::string truth_edges_csv(const SyntheticDataset& s) {
  std::string out = "edge,src,dst,band,eta,rho\n";
  const auto& g = s.placed.graph;
  std::vector<bool> band(g.num_edges(), false);
  for (int e : s.band) band[e] = true;
  for (int e = 0; e < g.num_edges(); ++e) {
    out += std::to_string(e) + "," + std::to_string(g.edges()[e].u) + "," + std::to_string(g.edges()[e].v) + "," +
           (band[e] ? "1" : "0") + "," + row_csv({s.truth.eta(e), s.truth.rho(e)}) + "\n";
  }
  return out;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edge-based spatial priors for areal count data", "edgefield"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress progress messages");

  // graph build
  auto* graph_cmd = app.add_subcommand("graph", "Graph utilities")->require_subcommand(1);
  auto* graph_build = graph_cmd->add_subcommand("build", "Validate an edge list and report its structure");
  std::string g_edges, g_out, g_lattice;
  graph_build->add_option("--graph", g_edges, "Edge list CSV (src,dst)");
  graph_build->add_option("--lattice", g_lattice, "Generate a ROWSxCOLS lattice instead");
  graph_build->add_option("--out", g_out, "Output directory");

  // prior simulate
  auto* prior_cmd = app.add_subcommand("prior", "Prior utilities")->require_subcommand(1);
  auto* prior_sim = prior_cmd->add_subcommand("simulate", "Draw latent fields from a prior");
  std::string p_model = "renege-sk", p_graph, p_eta, p_out;
  int p_draws = 1;
  std::optional<std::uint64_t> p_seed;
  double p_dep = 0.5, p_scale2 = 1.0;
  prior_sim->add_option("--model", p_model, "car, renege or renege-sk")->capture_default_str();
  prior_sim->add_option("--graph", p_graph, "Edge list CSV")->required();
  prior_sim->add_option("--draws", p_draws, "Number of draws")->capture_default_str();
  prior_sim->add_option("--seed", p_seed, "Random seed")->required();
  prior_sim->add_option("--gamma,--varsigma", p_dep, "Dependence parameter")->capture_default_str();
  prior_sim->add_option("--sigma2,--tau2", p_scale2, "Variance scale")->capture_default_str();
  prior_sim->add_option("--eta", p_eta, "Skewness vector: comma list of p values (default 0)");
  prior_sim->add_option("--out", p_out, "Output CSV (default stdout)");

  // study synth / replicate
  auto* study_cmd = app.add_subcommand("study", "Synthetic experiments")->require_subcommand(1);
  auto* synth_cmd = study_cmd->add_subcommand("synth", "Generate one synthetic dataset");
  std::string s_scenario, s_out;
  std::optional<std::uint64_t> s_seed;
  synth_cmd->add_option("--scenario", s_scenario, "Scenario file (key = value)");
  synth_cmd->add_option("--seed", s_seed, "Random seed")->required();
  synth_cmd->add_option("--out", s_out, "Output directory")->required();

  auto* rep_cmd = study_cmd->add_subcommand("replicate", "Fit several models over replicated datasets");
  std::string r_scenario, r_models = "car,renege,renege-sk", r_out;
  std::optional<std::uint64_t> r_seed;
  int r_reps = 10;
  SamplerFlags r_flags;
  rep_cmd->add_option("--scenario", r_scenario, "Scenario file (key = value)");
  rep_cmd->add_option("--models", r_models, "Comma-separated model list")->capture_default_str();
  rep_cmd->add_option("--seed", r_seed, "First seed; replicate j uses seed + j")->required();
  rep_cmd->add_option("--replicates", r_reps, "Number of datasets")->capture_default_str();
  rep_cmd->add_option("--out", r_out, "Output directory")->required();
  r_flags.add(rep_cmd);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model by Hamiltonian Monte Carlo");
  std::string f_model = "renege-sk", f_graph, f_data, f_out = ".";
  std::optional<std::uint64_t> f_seed;
  std::optional<int> f_lowrank;
  double f_a_tau = 1.0, f_b_tau = 1.0;
  SamplerFlags f_flags;
  fit_cmd->add_option("--model", f_model, "car, renege or renege-sk")->capture_default_str();
  fit_cmd->add_option("--graph", f_graph, "Edge list CSV")->required();
  fit_cmd->add_option("--data", f_data, "Data CSV (id,y,expected[,x...])")->required();
  fit_cmd->add_option("--seed", f_seed, "Random seed")->required();
  fit_cmd->add_option("--out", f_out, "Output directory")->capture_default_str();
  fit_cmd->add_option("--lowrank", f_lowrank, "Low-rank skewness basis size");
  fit_cmd->add_option("--a-tau", f_a_tau, "Gamma shape for the precision")->capture_default_str();
  fit_cmd->add_option("--b-tau", f_b_tau, "Gamma rate for the precision")->capture_default_str();
  f_flags.add(fit_cmd);

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate criteria files");
  std::vector<std::string> c_files;
  std::string c_out;
  cmp_cmd->add_option("--criteria", c_files, "Criteria CSV (repeatable)")->required();
  cmp_cmd->add_option("--out", c_out, "Write the report here as well");

  // render
  auto* render_cmd = app.add_subcommand("render", "Draw a node field as SVG");
  std::string v_graph, v_coords, v_values, v_column, v_edge_values, v_edge_column, v_out;
  double v_radius = 8.0;
  render_cmd->add_option("--coords", v_coords, "Coordinates CSV (id,x,y)")->required();
  render_cmd->add_option("--values", v_values, "Node values CSV with an id column")->required();
  render_cmd->add_option("--column", v_column, "Column of --values to draw")->required();
  render_cmd->add_option("--graph", v_graph, "Edge list CSV; draws edges");
  render_cmd->add_option("--edge-values", v_edge_values, "Edge values CSV with an edge column");
  render_cmd->add_option("--edge-column", v_edge_column, "Column of --edge-values to draw");
  render_cmd->add_option("--radius", v_radius, "Node radius in pixels")->capture_default_str();
  render_cmd->add_option("--out", v_out, "Output SVG (default stdout)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* active = &app;
    for (auto* sub : app.get_subcommands()) {
      active = sub;
      for (auto* inner : sub->get_subcommands()) active = inner;
    }
    err << active->help();
    return 2;
  }

  auto progress = [&](const std::string& m) {
    if (!quiet) err << m << "\n";
  };

  try {
    if (graph_build->parsed()) {
      if (g_edges.empty() == g_lattice.empty()) throw ValidationError("give exactly one of --graph or --lattice");
      ArealGraph g;
      std::optional<Coordinates> coords;
      if (!g_lattice.empty()) {
        const auto x = g_lattice.find('x');
        if (x == std::string::npos) throw ValidationError("--lattice expects ROWSxCOLS");
        const auto placed = make_lattice_graph(static_cast<int>(csv::parse_int(g_lattice.substr(0, x))),
                                               static_cast<int>(csv::parse_int(g_lattice.substr(x + 1))));
        g = placed.graph;
        coords = placed.coords;
      } else {
        require_file(g_edges);
        g = load_edge_list(g_edges);
      }
      const auto s = SpatialStructure::build(g);
      const std::string summary = graph_summary(s);
      out << summary;
      if (!g_out.empty()) {
        ensure_dir(g_out);
        csv::write_file(fs::path(g_out) / "edges.csv", format_edge_list(s.graph));
        std::string lg = "src,dst\n";
        for (int k = 0; k < s.line.adjacency.outerSize(); ++k)
          for (SparseMatrix::InnerIterator it(s.line.adjacency, k); it; ++it)
            if (it.row() < it.col()) lg += std::to_string(it.row()) + "," + std::to_string(it.col()) + "\n";
        csv::write_file(fs::path(g_out) / "line_graph.csv", lg);
        csv::write_file(fs::path(g_out) / "summary.txt", summary);
        if (coords) csv::write_file(fs::path(g_out) / "coords.csv", format_coords(*coords));
      }
      return 0;
    }

    if (prior_sim->parsed()) {
      if (p_draws < 1) throw ValidationError("draws must be >= 1");
      require_file(p_graph);
      const auto s = SpatialStructure::build(load_edge_list(p_graph));
      const Variant v = parse_variant(p_model);
      Prior prior;
      if (v == Variant::car) {
        if (!p_eta.empty()) throw ValidationError("--eta applies to renege-sk only");
        prior = CarPrior{p_dep, p_scale2};
      } else if (v == Variant::renege) {
        if (!p_eta.empty()) throw ValidationError("--eta applies to renege-sk only");
        prior = RenegePrior{p_dep, p_scale2};
      } else {
        Eigen::VectorXd eta = p_eta.empty() ? Eigen::VectorXd::Zero(s.p()) : parse_vector(p_eta, s.p(), "--eta");
        prior = RenegeSkPrior{p_dep, p_scale2, eta, kSkewCentering};
      }
      const auto draws = simulate_field(prior, s, p_draws, *p_seed);
      const std::string text = format_field_draws(draws, s.n(), s.p(), v != Variant::car);
      if (p_out.empty()) out << text;
      else csv::write_file(p_out, text);
      return 0;
    }

    if (synth_cmd->parsed()) {
      const Scenario sc = s_scenario.empty() ? Scenario{} : (require_file(s_scenario), load_scenario(s_scenario));
      const auto syn = generate_synthetic(sc, *s_seed);
      const fs::path dir(s_out);
      ensure_dir(dir);
      csv::write_file(dir / "edges.csv", format_edge_list(syn.placed.graph));
      csv::write_file(dir / "data.csv", format_dataset(syn.data));
      csv::write_file(dir / "coords.csv", format_coords(syn.placed.coords));
      csv::write_file(dir / "truth_nodes.csv", truth_nodes_csv(syn));
      csv::write_file(dir / "truth_edges.csv", truth_edges_csv(syn));
      csv::write_file(dir / "scenario.txt", sc.format());
      progress("wrote synthetic dataset (n=" + std::to_string(syn.data.n()) + ", band edges=" +
               std::to_string(syn.band.size()) + ") to " + dir.string());
      return 0;
    }

    if (rep_cmd->parsed()) {
      const Scenario sc = r_scenario.empty() ? Scenario{} : (require_file(r_scenario), load_scenario(r_scenario));
      if (r_reps < 1) throw ValidationError("replicates must be >= 1");
      std::vector<Variant> models;
      std::stringstream ss(r_models);
      std::string tok;
      while (std::getline(ss, tok, ',')) models.push_back(parse_variant(tok));
      std::vector<std::uint64_t> seeds;
      for (int j = 0; j < r_reps; ++j) seeds.push_back(*r_seed + static_cast<std::uint64_t>(j));
      auto cfg = r_flags.config(*r_seed, quiet, err);
      if (!quiet) cfg.progress = [&err](const std::string& m) { err << m << "\n"; };
      const auto result = run_replication(sc, models, seeds, cfg);
      const fs::path dir(r_out);
      ensure_dir(dir);
      csv::write_file(dir / "replication.csv", format_replication(result));
      csv::write_file(dir / "wins.csv", format_wins(result));
      std::string report;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        report += "seed " + std::to_string(seeds[i]) + "\n" + compare(result.tables[i]);
        for (std::size_t m = 0; m < models.size(); ++m)
          if (result.failed[i][m]) report += "  " + variant_name(models[m]) + " failed: " + result.errors[i][m] + "\n";
        report += "\n";
      }
      report += "wins\n" + format_wins(result);
      csv::write_file(dir / "report.txt", report);
      out << report;
      return 0;
    }

    if (fit_cmd->parsed()) {
      require_file(f_graph);
      require_file(f_data);
      const auto s = SpatialStructure::build(load_edge_list(f_graph));
      const Dataset data = load_dataset(f_data, s.n());
      ModelSpec spec;
      spec.variant = parse_variant(f_model);
      spec.a_tau = f_a_tau;
      spec.b_tau = f_b_tau;
      spec.lowrank = f_lowrank;
      if (spec.lowrank && spec.variant != Variant::renege_sk) throw ValidationError("--lowrank applies to renege-sk only");
      const auto cfg = f_flags.config(*f_seed, quiet, err);
      const fs::path dir(f_out);
      ensure_dir(dir);
      const PoissonModel model(s, data, spec);
      const auto fit = run_chains(model, cfg);
      const auto row = compute_criteria(variant_name(spec.variant), fit.draws, data);

      csv::write_file(dir / "draws.csv", format_draws(fit.draws));
      csv::write_file(dir / "diagnostics.json", format_diagnostics(fit.diagnostics));
      csv::write_file(dir / "criteria.csv", format_criteria({row}));

      const auto& dr = fit.draws;
      std::string nodes = "id,y,fitted_mean,psi_mean,theta_median\n";
      const Eigen::MatrixXd mu = dr.linear_predictor.array().exp();
      for (int i = 0; i < data.n(); ++i) {
        Eigen::VectorXd theta = dr.linear_predictor.col(i).array() - std::log(data.expected(i));
        theta.array() -= dr.constrained.col(dr.column("alpha")).array();
        if (data.k() > 0) {
          const int b0 = dr.column("beta.1");
          theta -= dr.constrained.middleCols(b0, data.k()) * data.x.row(i).transpose();
        }
        nodes += std::to_string(i) + "," +
                 row_csv({data.y(i), mu.col(i).mean(), dr.linear_predictor.col(i).mean(), median(theta)}) + "\n";
      }
      csv::write_file(dir / "nodes.csv", nodes);
      if (dr.edge_effects.cols() > 0) {
        std::string edges = "edge,src,dst,rho_median\n";
        for (int e = 0; e < s.p(); ++e)
          edges += std::to_string(e) + "," + std::to_string(s.graph.edges()[e].u) + "," +
                   std::to_string(s.graph.edges()[e].v) + "," + csv::format_double(median(dr.edge_effects.col(e))) +
                   "\n";
        csv::write_file(dir / "edges_summary.csv", edges);
      }
      out << compare({row});
      out << "divergences: " << fit.diagnostics.divergence_count << "\n";
      if (row.pareto_k_warnings > 0) out << "pareto k > 0.7 for " << row.pareto_k_warnings << " areas\n";
      return 0;
    }

    if (cmp_cmd->parsed()) {
      CriteriaTable rows;
      for (const auto& f : c_files) {
        require_file(f);
        for (auto& r : load_criteria(f)) rows.push_back(std::move(r));
      }
      if (rows.empty()) throw ValidationError("no criteria rows found");
      const std::string report = compare(rows);
      out << report;
      if (!c_out.empty()) csv::write_file(c_out, report);
      return 0;
    }

    if (render_cmd->parsed()) {
      require_file(v_values);
      require_file(v_coords);
      std::optional<ArealGraph> g;
      int n = 0;
      if (!v_graph.empty()) {
        require_file(v_graph);
        g = load_edge_list(v_graph);
        n = g->num_nodes();
      } else {
        const auto t = csv::read(v_values);
        n = static_cast<int>(t.rows.size());
      }
      const Eigen::VectorXd field = load_keyed_column(v_values, "id", v_column, n);
      const Coordinates coords = load_coords(v_coords, n);
      std::optional<Eigen::VectorXd> edge_vals;
      if (!v_edge_values.empty()) {
        if (!g) throw ValidationError("--edge-values needs --graph");
        if (v_edge_column.empty()) throw ValidationError("--edge-values needs --edge-column");
        require_file(v_edge_values);
        edge_vals = load_keyed_column(v_edge_values, "edge", v_edge_column, g->num_edges());
      }
      RenderOptions opt;
      opt.node_radius = v_radius;
      const std::string svg = render_field(field, coords, opt, g ? &*g : nullptr, edge_vals ? &*edge_vals : nullptr);
      if (v_out.empty()) out << svg;
      else csv::write_file(v_out, svg);
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(args, out, err);
}

}  // namespace edgefield
