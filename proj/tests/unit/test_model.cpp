#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support.hpp"
#include "edgefield/model.hpp"
#include "edgefield/prior.hpp"
#include "edgefield/rng.hpp"

using namespace edgefield;

namespace {

Dataset small_data(int n, std::uint64_t seed, int k = 0) {
  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> pois(6.0);
  std::uniform_real_distribution<double> e(2.0, 8.0);
  Dataset d;
  d.y.resize(n);
  d.expected.resize(n);
  for (int i = 0; i < n; ++i) {
    d.y(i) = pois(rng);
    d.expected(i) = e(rng);
  }
  d.x = Eigen::MatrixXd::Zero(n, k);
  for (int j = 0; j < k; ++j) d.x.col(j) = edgefield::rng::standard_normal(rng, n);
  return d;
}

Eigen::VectorXd random_point(const PoissonModel& m, std::mt19937_64& rng, double scale = 0.7) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd x(m.dim());
  for (int i = 0; i < m.dim(); ++i) x(i) = u(rng);
  return x;
}

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

// Log posterior written out with dense matrices.
double dense_log_posterior(const PoissonModel& m, const SpatialStructure& s, const Eigen::VectorXd& x) {
  const auto& L = m.layout();
  const auto& spec = m.spec();
  const auto& d = m.data();
  const bool car = spec.variant == Variant::car;
  const bool skew = spec.variant == Variant::renege_sk;
  const double lo = m.dependence_lower(), hi = m.dependence_upper();
  const double sg = 1.0 / (1.0 + std::exp(-x(L.dependence)));
  const double dep = lo + (hi - lo) * sg;
  const double scale = std::exp(x(L.log_scale));
  const Eigen::VectorXd lat = x.segment(L.latent, L.latent_len);

  const Eigen::MatrixXd c = s.incidence;
  Eigen::MatrixXd prec;
  if (car) {
    const Eigen::MatrixXd a = s.graph.adjacency();
    prec = Eigen::MatrixXd(s.graph.degree_vector().asDiagonal()) - dep * a;
  } else {
    const Eigen::MatrixXd ae = support::brute_line_adjacency(s.graph);
    prec = Eigen::MatrixXd(ae.rowwise().sum().asDiagonal()) - dep * ae;
  }
  Eigen::VectorXd theta;
  double lp = 0.0;
  if (car) {
    theta = lat;
  } else if (skew) {
    const double se = std::exp(x(L.log_sigma_eta));
    const double u = std::exp(x(L.log_u));
    const Eigen::VectorXd coef = x.segment(L.skew, L.skew_len);
    const Eigen::VectorXd eta = se * (m.basis() ? Eigen::VectorXd(*m.basis() * coef) : coef);
    theta = c * (lat + eta * (u - std::sqrt(2.0 / std::numbers::pi)));
    const double half = std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi);
    lp += half - 0.5 * u * u + std::log(u);
    lp += half - 0.5 * se * se + std::log(se);
    lp += -0.5 * coef.size() * std::log(2.0 * std::numbers::pi) - 0.5 * coef.squaredNorm();
  } else {
    theta = c * lat;
  }
  Eigen::VectorXd psi = d.expected.array().log().matrix() + theta;
  psi.array() += x(L.alpha);
  if (L.beta_len) psi += d.x * x.segment(L.beta, L.beta_len);
  for (int i = 0; i < d.n(); ++i) lp += d.y(i) * psi(i) - std::exp(psi(i)) - std::lgamma(d.y(i) + 1.0);

  const double q = static_cast<double>(lat.size());
  lp += 0.5 * support::dense_log_det(prec) - q * std::log(scale) - 0.5 * lat.dot(prec * lat) / (scale * scale) -
        0.5 * q * std::log(2.0 * std::numbers::pi);

  lp += -0.5 * std::log(2.0 * std::numbers::pi * spec.alpha_var) - 0.5 * x(L.alpha) * x(L.alpha) / spec.alpha_var;
  for (int j = 0; j < L.beta_len; ++j) {
    const double b = x(L.beta + j);
    lp += -0.5 * std::log(2.0 * std::numbers::pi * spec.beta_sd * spec.beta_sd) - 0.5 * b * b / (spec.beta_sd * spec.beta_sd);
  }
  // uniform dependence through the logit: density sg (1 - sg)
  lp += -softplus(-x(L.dependence)) - softplus(x(L.dependence));
  const double tau = 1.0 / (scale * scale);
  lp += spec.a_tau * std::log(spec.b_tau) - std::lgamma(spec.a_tau) + (spec.a_tau - 1.0) * std::log(tau) -
        spec.b_tau * tau + std::log(2.0 * tau);
  return lp;
}

}  // namespace

TEST_CASE("variant names") {
  CHECK(parse_variant("renege-sk") == Variant::renege_sk);
  CHECK(parse_variant("renege_sk") == Variant::renege_sk);
  CHECK(variant_name(Variant::car) == "car");
  CHECK_THROWS_AS(parse_variant("bym"), ValidationError);
}

TEST_CASE("CAR likelihood at zero field and zero counts") {
  const auto s = SpatialStructure::build(support::map_graph());
  Dataset d;
  d.y = Eigen::VectorXd::Zero(5);
  d.expected = Eigen::VectorXd::LinSpaced(5, 1.0, 3.0);
  d.x = Eigen::MatrixXd::Zero(5, 0);
  const PoissonModel m(s, d, ModelSpec{Variant::car});
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m.dim());
  CHECK(m.terms(x).likelihood == doctest::Approx(-d.expected.sum()).epsilon(1e-14));
  CHECK(m.log_posterior(x) == doctest::Approx(dense_log_posterior(m, s, x)).epsilon(1e-12));
}

TEST_CASE("log posterior matches the dense reference") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 6; ++t) {
    const auto g = support::random_connected_graph(4 + t % 3, rng, 0.3);
    if (g.num_edges() > 10) continue;
    const auto s = SpatialStructure::build(g);
    const auto d = small_data(g.num_nodes(), 100 + t, t % 2);
    for (Variant v : {Variant::car, Variant::renege, Variant::renege_sk}) {
      ModelSpec spec{v};
      spec.a_tau = 2.0;
      spec.b_tau = 0.5;
      const PoissonModel m(s, d, spec);
      const Eigen::VectorXd x = random_point(m, rng);
      CHECK(m.log_posterior(x) == doctest::Approx(dense_log_posterior(m, s, x)).epsilon(1e-9));
      CHECK(m.terms(x).total() == doctest::Approx(m.log_posterior(x)).epsilon(1e-14));
    }
  }
}

TEST_CASE("low-rank skewness matches the dense reference") {
  const auto s = SpatialStructure::build(support::map_graph());
  ModelSpec spec{Variant::renege_sk};
  spec.lowrank = 3;
  const PoissonModel m(s, small_data(5, 4), spec);
  CHECK(m.layout().skew_len == 3);
  std::mt19937_64 rng(8);
  const Eigen::VectorXd x = random_point(m, rng);
  CHECK(m.log_posterior(x) == doctest::Approx(dense_log_posterior(m, s, x)).epsilon(1e-9));
}

TEST_CASE("analytic gradients agree with central differences") {
  const auto s = SpatialStructure::build(ArealGraph::from_edges({{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {3, 5}, {4, 5}}));
  const auto d = small_data(6, 9, 1);
  std::mt19937_64 rng(31);
  for (Variant v : {Variant::car, Variant::renege, Variant::renege_sk}) {
    const PoissonModel m(s, d, ModelSpec{v});
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd x = random_point(m, rng, 1.0);
      Eigen::VectorXd g;
      m.log_posterior_gradient(x, g);
      for (int i = 0; i < m.dim(); ++i) {
        const double h = 1e-5;
        Eigen::VectorXd a = x, b = x;
        a(i) += h;
        b(i) -= h;
        const double fd = (m.log_posterior(a) - m.log_posterior(b)) / (2 * h);
        worst = std::max(worst, std::abs(g(i) - fd) / std::max(1.0, std::abs(fd)));
      }
    }
    INFO(variant_name(v));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("edge-block gradient at zero effects is the likelihood score") {
  const auto s = SpatialStructure::build(support::map_graph());
  const auto d = small_data(5, 2);
  for (Variant v : {Variant::renege, Variant::renege_sk}) {
    const PoissonModel m(s, d, ModelSpec{v});
    std::mt19937_64 rng(4);
    Eigen::VectorXd x = random_point(m, rng);
    const auto& L = m.layout();
    x.segment(L.latent, L.latent_len).setZero();
    if (L.skew >= 0) x.segment(L.skew, L.skew_len).setZero();
    Eigen::VectorXd g;
    m.log_posterior_gradient(x, g);
    const Eigen::VectorXd mu = m.linear_predictor(x).array().exp();
    const Eigen::VectorXd score = s.incidence.transpose() * (d.y - mu);
    CHECK((g.segment(L.latent, L.latent_len) - score).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("vanishing skew scale recovers the Gaussian edge model") {
  const auto s = SpatialStructure::build(support::map_graph());
  const auto d = small_data(5, 12);
  const PoissonModel sk(s, d, ModelSpec{Variant::renege_sk});
  const PoissonModel g(s, d, ModelSpec{Variant::renege});
  std::mt19937_64 rng(1);
  const Eigen::VectorXd xg = random_point(g, rng);
  Eigen::VectorXd xs = random_point(sk, rng);
  const auto& Ls = sk.layout();
  const auto& Lg = g.layout();
  xs(Ls.alpha) = xg(Lg.alpha);
  xs(Ls.dependence) = xg(Lg.dependence);
  xs(Ls.log_scale) = xg(Lg.log_scale);
  xs.segment(Ls.latent, Ls.latent_len) = xg.segment(Lg.latent, Lg.latent_len);
  xs(Ls.log_sigma_eta) = -20.0;
  const auto ts = sk.terms(xs);
  CHECK(ts.total() - ts.skew_prior == doctest::Approx(g.log_posterior(xg)).epsilon(1e-6));
}

TEST_CASE("pointwise log-likelihood") {
  CHECK(poisson_log_pmf(3.0, 0.0) == doctest::Approx(-1.0 - std::log(6.0)).epsilon(1e-14));
  CHECK(poisson_log_pmf(0.0, 0.7) == doctest::Approx(-std::exp(0.7)).epsilon(1e-14));
  const auto s = SpatialStructure::build(support::map_graph());
  const PoissonModel m(s, small_data(5, 3), ModelSpec{Variant::renege_sk});
  std::mt19937_64 rng(2);
  const Eigen::VectorXd x = random_point(m, rng);
  CHECK(m.pointwise_loglik(x).sum() == doctest::Approx(m.terms(x).likelihood).epsilon(1e-12));
}

TEST_CASE("transforms round trip") {
  const auto s = SpatialStructure::build(support::map_graph());
  std::mt19937_64 rng(6);
  for (Variant v : {Variant::car, Variant::renege, Variant::renege_sk}) {
    const PoissonModel m(s, small_data(5, 3, 2), ModelSpec{v});
    for (int t = 0; t < 10; ++t) {
      const Eigen::VectorXd x = random_point(m, rng, 3.0);
      const auto c = m.constrain(x);
      CHECK(c.dependence > m.dependence_lower());
      CHECK(c.dependence < m.dependence_upper());
      CHECK((m.unconstrain(c) - x).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(m.constrained_names().size() == static_cast<std::size_t>(m.dim()));
    CHECK(m.layout().names().size() == static_cast<std::size_t>(m.dim()));
  }
}

TEST_CASE("draw column names follow the block layout") {
  const auto s = SpatialStructure::build(support::map_graph());
  const PoissonModel m(s, small_data(5, 3, 1), ModelSpec{Variant::renege_sk});
  const auto names = m.constrained_names();
  CHECK(names[0] == "alpha");
  CHECK(names[1] == "beta.1");
  CHECK(names[2] == "gamma");
  CHECK(names[3] == "sigma_theta");
  CHECK(names[4] == "sigma_eta");
  CHECK(names[5] == "u");
  CHECK(names[6] == "eps.1");
  CHECK(names[13] == "eta_raw.1");
  const PoissonModel car(s, small_data(5, 3), ModelSpec{Variant::car});
  CHECK(car.constrained_names()[3] == "theta.1");
}

TEST_CASE("posterior is invariant to relabelling regions") {
  const auto g = support::map_graph();
  const auto s = SpatialStructure::build(g);
  const std::vector<int> perm{3, 0, 4, 1, 2};  // old id -> new id
  std::vector<Edge> pe;
  for (const auto& e : g.edges()) pe.push_back({perm[e.u], perm[e.v]});
  const auto gp = ArealGraph::from_edges(pe);
  const auto sp = SpatialStructure::build(gp);
  const auto d = small_data(5, 14, 1);
  Dataset dp = d;
  for (int i = 0; i < 5; ++i) {
    dp.y(perm[i]) = d.y(i);
    dp.expected(perm[i]) = d.expected(i);
    dp.x.row(perm[i]) = d.x.row(i);
  }
  std::mt19937_64 rng(3);
  for (Variant v : {Variant::car, Variant::renege_sk}) {
    const PoissonModel m(s, d, ModelSpec{v});
    const PoissonModel mp(sp, dp, ModelSpec{v});
    const Eigen::VectorXd x = random_point(m, rng);
    Eigen::VectorXd xp = x;
    const auto& L = m.layout();
    if (v == Variant::car) {
      for (int i = 0; i < 5; ++i) xp(L.latent + perm[i]) = x(L.latent + i);
    } else {
      for (int e = 0; e < g.num_edges(); ++e) {
        const int ep = gp.edge_index(perm[g.edges()[e].u], perm[g.edges()[e].v]);
        xp(L.latent + ep) = x(L.latent + e);
        xp(L.skew + ep) = x(L.skew + e);
      }
    }
    CHECK(mp.log_posterior(xp) == doctest::Approx(m.log_posterior(x)).epsilon(1e-12));
  }
}

TEST_CASE("doubling the offsets shifts the intercept by -log 2") {
  const auto s = SpatialStructure::build(support::map_graph());
  const auto d = small_data(5, 5);
  Dataset d2 = d;
  d2.expected *= 2.0;
  const PoissonModel m1(s, d, ModelSpec{Variant::car});
  const PoissonModel m2(s, d2, ModelSpec{Variant::car});
  const auto argmax = [](const PoissonModel& m) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(m.dim());
    const auto f = [&](double a) {
      x(m.layout().alpha) = a;
      return m.terms(x).likelihood;
    };
    double lo = -5.0, hi = 5.0;
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
      const double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
      if (f(a) > f(b))
        hi = b;
      else
        lo = a;
    }
    return 0.5 * (lo + hi);
  };
  CHECK(argmax(m2) - argmax(m1) == doctest::Approx(-std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("dataset validation and round trip") {
  const auto d = parse_dataset("id,y,expected,x1\n1,3,2.5,0.1\n0,0,1,-1\n", 2);
  CHECK(d.y == Eigen::Vector2d(0, 3));
  CHECK(d.expected == Eigen::Vector2d(1, 2.5));
  CHECK(d.k() == 1);
  const auto back = parse_dataset(format_dataset(d), 2);
  CHECK(back.y == d.y);
  CHECK(back.expected == d.expected);
  CHECK(back.x == d.x);
  CHECK_THROWS_AS(parse_dataset("id,y,expected\n0,1,0\n1,1,1\n", 2), ValidationError);
  CHECK_THROWS_AS(parse_dataset("id,y,expected\n0,1.5,1\n1,1,1\n", 2), ValidationError);
  CHECK_THROWS_AS(parse_dataset("id,y,expected\n0,1,1\n", 2), ValidationError);
  CHECK_THROWS_AS(parse_dataset("id,y,expected\n0,-1,1\n1,1,1\n", 2), ValidationError);
}

TEST_CASE("model spec validation") {
  ModelSpec spec;
  spec.a_tau = 0.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = ModelSpec{};
  spec.lowrank = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}
