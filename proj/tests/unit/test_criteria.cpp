#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "../support.hpp"
#include "edgefield/criteria.hpp"
#include "edgefield/rng.hpp"

using namespace edgefield;

namespace {

CriteriaTable reference(const std::string& table) {
  CriteriaTable rows;
  for (const auto& r : support::reference_rows())
    if (table == r.table) rows.push_back({r.model, r.dbar, r.pd, r.dic, r.waic, r.looic, r.rmse, 0});
  return rows;
}

// Column headers marked with '*' in the row of `model`.
std::vector<std::string> marked(const std::string& report, const std::string& model) {
  static const std::vector<std::string> headers{"Dbar", "pD", "DIC", "WAIC", "LOOIC", "RMSE"};
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string name;
    cells >> name;
    if (name != model) continue;
    std::vector<std::string> out;
    std::string cell;
    for (int c = 0; cells >> cell; ++c)
      if (cell.back() == '*') out.push_back(headers[c]);
    return out;
  }
  return {};
}

}  // namespace

TEST_CASE("WAIC hand cases") {
  Eigen::MatrixXd ll(2, 1);
  ll << -1.0, -2.0;
  const auto w = waic(ll);
  CHECK(w.lppd == doctest::Approx(std::log((std::exp(-1.0) + std::exp(-2.0)) / 2.0)).epsilon(1e-14));
  CHECK(std::abs(w.lppd - -1.37990) < 5e-5);
  CHECK(w.p_waic == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(w.waic - support::two_draw_waic()) < 1e-6);
  CHECK(std::abs(w.waic - 3.75980) < 5e-5);

  ll << std::log(0.5), std::log(0.5);
  const auto c = waic(ll);
  CHECK(c.lppd == doctest::Approx(std::log(0.5)));
  CHECK(c.p_waic == 0.0);
  CHECK(c.waic == doctest::Approx(-2.0 * std::log(0.5)));

  CHECK_THROWS_AS(waic(Eigen::MatrixXd::Zero(1, 3)), ValidationError);
}

TEST_CASE("WAIC invariances and bounds") {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd ll(200, 6);
  for (int j = 0; j < 6; ++j) ll.col(j) = (rng::standard_normal(rng, 200).array() * 0.3 - 2.0 - j * 0.1).matrix();
  const auto base = waic(ll);

  Eigen::MatrixXd dup(400, 6);
  dup << ll, ll;
  CHECK(waic(dup).lppd == doctest::Approx(base.lppd).epsilon(1e-12));

  std::vector<int> rows(200), cols{5, 2, 0, 4, 1, 3};
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  Eigen::MatrixXd perm(200, 6);
  for (int s = 0; s < 200; ++s)
    for (int j = 0; j < 6; ++j) perm(s, j) = ll(rows[s], cols[j]);
  CHECK(waic(perm).waic == doctest::Approx(base.waic).epsilon(1e-12));

  CHECK(base.p_waic >= 0.0);
  CHECK(base.lppd >= ll.colwise().mean().sum());
  CHECK(base.se > 0.0);
}

TEST_CASE("LOOIC of a constant log-likelihood") {
  const double c = -1.7;
  const auto r = looic(Eigen::MatrixXd::Constant(300, 4, c));
  CHECK(r.looic == -2.0 * 4 * c);
  CHECK(r.degenerate);
}

TEST_CASE("LOOIC on the conjugate normal toy") {
  const support::ConjugateToy toy;
  const Eigen::MatrixXd ll = toy.pointwise(10000, 1);
  const auto r = looic(ll);
  CHECK(std::abs(r.looic - toy.exact_looic()) < 0.05);
  CHECK(r.pareto_k.size() == 1u);
  CHECK(r.pareto_k[0] < 0.7);
}

TEST_CASE("LOOIC and WAIC agree on a many-observation conjugate toy") {
  support::ConjugateToy toy;
  toy.y.clear();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.4, 1.0);
  for (int i = 0; i < 30; ++i) toy.y.push_back(z(rng));
  const Eigen::MatrixXd ll = toy.pointwise(4000, 2);
  const auto r = looic(ll);
  const auto w = waic(ll);
  CHECK(std::abs(r.looic - toy.exact_looic()) < 0.1);
  CHECK(r.looic >= w.waic - 1e-2);
  CHECK(std::abs(r.looic - w.waic) < 2.0 * w.se);
  CHECK(r.warnings == 0);
}

TEST_CASE("heavy-tailed importance ratios raise a warning") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd ll(4000, 2);
  for (int s = 0; s < 4000; ++s) {
    ll(s, 0) = std::log(1.0 - u(rng)) / 1.2;  // exp(-ll) ~ Pareto(1.2)
    ll(s, 1) = -1.0 + 0.1 * std::sin(s);
  }
  const auto r = looic(ll);
  CHECK(r.pareto_k[0] > 0.7);
  CHECK(r.pareto_k[1] < 0.7);
  CHECK(r.warnings == 1);
}

TEST_CASE("generalized Pareto tail fit") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> e(2000);
  for (auto& v : e) v = ex(rng);
  std::sort(e.begin(), e.end());
  CHECK(std::abs(fit_generalized_pareto(e).k) < 0.1);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : e) v = std::pow(1.0 - u(rng), -0.5) - 1.0;  // k = 0.5
  std::sort(e.begin(), e.end());
  const auto f = fit_generalized_pareto(e);
  CHECK(f.k == doctest::Approx(0.5).epsilon(0.2));
  CHECK(f.sigma > 0.0);
}

TEST_CASE("deviance statistics") {
  Eigen::VectorXd y(3);
  y << 0, 2, 5;
  Eigen::MatrixXd psi(1, 3);
  psi << 0.1, 0.5, 1.4;
  Eigen::MatrixXd ll(1, 3);
  for (int i = 0; i < 3; ++i) ll(0, i) = y(i) * psi(0, i) - std::exp(psi(0, i)) - std::lgamma(y(i) + 1.0);
  const auto one = deviance_stats(ll, psi, y);
  CHECK(one.pd == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(one.dic == one.dbar);
  CHECK(one.dbar == doctest::Approx(-2.0 * ll.sum()));

  Eigen::MatrixXd psi2(2, 3);
  psi2 << 0.1, 0.5, 1.4, 0.5, 0.9, 1.8;
  Eigen::MatrixXd ll2(2, 3);
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < 3; ++i) ll2(s, i) = y(i) * psi2(s, i) - std::exp(psi2(s, i)) - std::lgamma(y(i) + 1.0);
  const auto two = deviance_stats(ll2, psi2, y);
  CHECK(two.dic == two.dbar + two.pd);
  const Eigen::RowVectorXd bar = psi2.colwise().mean();
  double plug = 0.0;
  for (int i = 0; i < 3; ++i) plug += -2.0 * (y(i) * bar(i) - std::exp(bar(i)) - std::lgamma(y(i) + 1.0));
  CHECK(two.pd == doctest::Approx(two.dbar - plug).epsilon(1e-12));
}

TEST_CASE("reference DIC rows are Dbar + pD up to rounding") {
  for (const auto& r : support::reference_rows()) {
    INFO(r.table, " ", r.model);
    CHECK(std::abs(r.dbar + r.pd - r.dic) <= 0.02);
  }
}

TEST_CASE("RMSE") {
  Eigen::VectorXd y(2);
  y << 0, 2;
  CHECK(rmse(Eigen::MatrixXd::Zero(3, 2), y) == doctest::Approx(1.0).epsilon(1e-14));
  Eigen::MatrixXd lp(2, 2);
  lp << std::log(3.0), std::log(4.0), std::log(3.0), std::log(4.0);
  Eigen::VectorXd exact(2);
  exact << 3, 4;
  CHECK(rmse(lp, exact) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("comparison marks column minima") {
  const auto sim = compare(reference("simulation"));
  CHECK(marked(sim, "RENeGe-Skew") == std::vector<std::string>{"pD", "DIC", "WAIC", "LOOIC", "RMSE"});
  CHECK(marked(sim, "RENeGe") == std::vector<std::string>{"Dbar"});
  CHECK(marked(sim, "CAR").empty());

  const auto colon = compare(reference("colon"));
  CHECK(marked(colon, "RENeGe") == std::vector<std::string>{"pD", "DIC"});
  CHECK(marked(colon, "RENeGe-sk") == std::vector<std::string>{"Dbar", "WAIC", "RMSE"});

  const auto lung = compare(reference("lung"));
  CHECK(marked(lung, "RENeGe-sk") == std::vector<std::string>{"pD", "DIC", "WAIC"});
  CHECK(lung.find("NA") != std::string::npos);

  const auto single = compare({reference("simulation")[0]});
  CHECK(single.find('*') == std::string::npos);
  CHECK(std::count(single.begin(), single.end(), '\n') == 2);
}

TEST_CASE("criteria CSV round trip") {
  const auto rows = reference("simulation");
  const auto back = parse_criteria(format_criteria(rows));
  REQUIRE(back.size() == 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].model == rows[i].model);
    CHECK(back[i].dic == rows[i].dic);
    CHECK(back[i].looic == rows[i].looic);
  }
  const auto lung = parse_criteria(format_criteria(reference("lung")));
  CHECK(std::isnan(lung[0].looic));
  const auto no_loo = parse_criteria("model,Dbar,pD,DIC,WAIC,RMSE\nA,1,2,3,4,5\n");
  CHECK(std::isnan(no_loo[0].looic));
  CHECK(no_loo[0].rmse == 5.0);
}
