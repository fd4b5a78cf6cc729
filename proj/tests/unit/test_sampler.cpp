#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "../support.hpp"
#include "edgefield/csv.hpp"
#include "edgefield/sampler.hpp"
#include "edgefield/synth.hpp"

using namespace edgefield;

namespace {

Target gaussian_target(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd prec = cov.inverse();
  Target t;
  t.dim = static_cast<int>(cov.rows());
  t.log_density_gradient = [prec](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -prec * x;
    return -0.5 * x.dot(prec * x);
  };
  t.initial_point = [d = t.dim](rng::Engine& e) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = u(e);
    return x;
  };
  return t;
}

Eigen::MatrixXd stack(const std::vector<ChainResult>& chains) {
  Eigen::MatrixXd all(chains.size() * chains[0].draws.rows(), chains[0].draws.cols());
  for (std::size_t c = 0; c < chains.size(); ++c) all.middleRows(c * chains[0].draws.rows(), chains[0].draws.rows()) = chains[c].draws;
  return all;
}

std::vector<Eigen::VectorXd> column(const std::vector<ChainResult>& chains, int j) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) out.emplace_back(c.draws.col(j));
  return out;
}

SamplerConfig toy_config(std::uint64_t seed) {
  SamplerConfig c;
  c.seed = seed;
  c.samples = 1000;
  return c;
}

}  // namespace

TEST_CASE("standard normal target") {
  const auto chains = run_hmc(gaussian_target(Eigen::MatrixXd::Identity(5, 5)), toy_config(3));
  const Eigen::MatrixXd all = stack(chains);
  for (int j = 0; j < 5; ++j) {
    const double m = all.col(j).mean();
    const double v = (all.col(j).array() - m).square().mean();
    CHECK(std::abs(m) < 0.05);
    CHECK(std::abs(v - 1.0) < 0.1);
    CHECK(split_rhat(column(chains, j)).value < 1.01);
  }
  for (const auto& c : chains) {
    const double acc = c.accept_stat.mean();
    CHECK(acc > 0.8 - 0.15);
    CHECK(acc < 0.8 + 0.1);
    CHECK(c.divergences == 0);
  }
}

TEST_CASE("correlated two-dimensional Gaussian") {
  Eigen::Matrix2d cov;
  cov << 2.0, 1.2, 1.2, 1.0;
  SamplerConfig cfg = toy_config(8);
  cfg.samples = 2500;
  const Eigen::MatrixXd all = stack(run_hmc(gaussian_target(cov), cfg));
  const Eigen::MatrixXd centered = all.rowwise() - all.colwise().mean();
  const Eigen::MatrixXd emp = centered.transpose() * centered / static_cast<double>(all.rows());
  CHECK(all.rows() == 10000);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(emp(i, j) - cov(i, j)) < 0.05 * std::abs(cov(i, j)));
}

TEST_CASE("diagonal metric on a scaled target") {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  cov.diagonal() << 0.01, 1.0, 100.0;
  SamplerConfig cfg = toy_config(4);
  cfg.metric = MetricKind::diag;
  const auto chains = run_hmc(gaussian_target(cov), cfg);
  const Eigen::MatrixXd all = stack(chains);
  for (int j = 0; j < 3; ++j) {
    const double v = (all.col(j).array() - all.col(j).mean()).square().mean();
    CHECK(v == doctest::Approx(cov(j, j)).epsilon(0.15));
  }
  CHECK(chains[0].inverse_metric(2) > 10.0 * chains[0].inverse_metric(0));
}

TEST_CASE("seeded runs are reproducible and chains differ") {
  const auto t = gaussian_target(Eigen::MatrixXd::Identity(3, 3));
  SamplerConfig cfg = toy_config(17);
  cfg.warmup = 100;
  cfg.samples = 100;
  const auto a = run_hmc(t, cfg);
  cfg.threads = 1;
  const auto b = run_hmc(t, cfg);
  for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c].draws == b[c].draws);
  CHECK(a[0].draws != a[1].draws);
  cfg.seed = 18;
  CHECK(run_hmc(t, cfg)[0].draws != a[0].draws);
}

TEST_CASE("split R-hat and ESS on independent draws") {
  std::mt19937_64 rng(1);
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < 4; ++c) chains.push_back(rng::standard_normal(rng, 1000));
  const auto r = split_rhat(chains);
  CHECK(r.value >= 1.0 - 1e-3);
  CHECK(r.value <= 1.01);
  CHECK_FALSE(r.degenerate);
  CHECK(ess_bulk(chains).value == doctest::Approx(4000.0).epsilon(0.2));
}

TEST_CASE("ESS of an autoregressive chain") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::vector<Eigen::VectorXd> chains;
  const double phi = 0.9;
  const int n = 20000;
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd x(n);
    x(0) = z(rng) / std::sqrt(1 - phi * phi);
    for (int i = 1; i < n; ++i) x(i) = phi * x(i - 1) + z(rng);
    chains.push_back(x);
  }
  const double ratio = ess_bulk(chains).value / (4.0 * n);
  CHECK(ratio == doctest::Approx((1 - phi) / (1 + phi)).epsilon(0.3));
}

TEST_CASE("mismatched chains give a large R-hat") {
  std::mt19937_64 rng(3);
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < 4; ++c) chains.push_back(rng::standard_normal(rng, 500).array() + 3.0 * c);
  CHECK(split_rhat(chains).value > 1.5);
}

TEST_CASE("constant chains are flagged") {
  std::vector<Eigen::VectorXd> chains(3, Eigen::VectorXd::Constant(50, 2.0));
  const auto r = split_rhat(chains);
  CHECK(r.degenerate);
  CHECK(r.value == 1.0);
  const auto e = ess_bulk(chains);
  CHECK(e.degenerate);
  CHECK(e.value == 150.0);
  CHECK_THROWS_AS(split_rhat({Eigen::VectorXd::Zero(10)}), ValidationError);
  CHECK_THROWS_AS(ess_bulk({Eigen::VectorXd::Zero(4)}), ValidationError);
}

TEST_CASE("config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.warmup = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.chains = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_metric("diag") == MetricKind::diag);
  CHECK_THROWS_AS(parse_metric("full"), ValidationError);
}

TEST_CASE("sampling coordinates keep the posterior and its gradient") {
  Scenario sc;
  sc.rows = 3;
  sc.cols = 3;
  const auto syn = generate_synthetic(sc, 2);
  const auto s = SpatialStructure::build(syn.placed.graph);
  for (Variant v : {Variant::car, Variant::renege, Variant::renege_sk})
    for (bool nc : {false, true}) {
      const PoissonModel m(s, syn.data, ModelSpec{v});
      const auto t = make_target(m, nc);
      rng::Engine e(5);
      Eigen::VectorXd z = t.initial_point(e);
      for (int i = 0; i < z.size(); ++i) z(i) += 0.3 * std::sin(1.3 * i + 0.2);
      Eigen::VectorXd g, scratch;
      t.log_density_gradient(z, g);
      double worst = 0.0;
      for (int i = 0; i < z.size(); ++i) {
        Eigen::VectorXd a = z, b = z;
        a(i) += 1e-5;
        b(i) -= 1e-5;
        const double fd = (t.log_density_gradient(a, scratch) - t.log_density_gradient(b, scratch)) / 2e-5;
        worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, std::abs(fd)));
      }
      INFO(variant_name(v), " noncentered=", nc);
      CHECK(worst < 1e-5);
    }
}

TEST_CASE("model fit bookkeeping") {
  Scenario sc;
  sc.rows = 3;
  sc.cols = 3;
  const auto syn = generate_synthetic(sc, 4);
  const auto s = SpatialStructure::build(syn.placed.graph);
  const PoissonModel m(s, syn.data, ModelSpec{Variant::renege_sk});
  SamplerConfig cfg;
  cfg.seed = 9;
  cfg.chains = 2;
  cfg.warmup = 150;
  cfg.samples = 60;
  const auto fit = run_chains(m, cfg);
  const auto& d = fit.draws;
  CHECK(d.size() == 120);
  CHECK(d.names == m.constrained_names());
  CHECK(d.pointwise.rows() == 120);
  CHECK(d.pointwise.cols() == 9);
  CHECK(d.edge_effects.cols() == s.p());
  for (int r = 0; r < d.size(); r += 17) {
    const Eigen::VectorXd x = d.unconstrained.row(r).transpose();
    CHECK(d.log_post(r) == doctest::Approx(m.log_posterior(x)).epsilon(1e-12));
    CHECK((d.constrained.row(r).transpose() - m.constrained_row(x)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d.pointwise.row(r).transpose() - m.pointwise_loglik(x)).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (const auto& e : fit.diagnostics.ess_bulk) CHECK(e.value >= 0.0);

  const auto table = csv::parse(format_draws(d));
  CHECK(table.header[0] == "chain");
  CHECK(table.header[2] == "log_post");
  CHECK(table.header[3] == "alpha");
  CHECK(table.rows.size() == 120u);
  CHECK(csv::parse_double(table.rows[5][3]) == d.constrained(5, 0));

  const auto json = nlohmann::json::parse(format_diagnostics(fit.diagnostics));
  CHECK(json.contains("divergence_count"));
  CHECK(json["parameters"]["alpha"].contains("rhat"));
}
