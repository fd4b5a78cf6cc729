#include "edgefield/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "edgefield/csv.hpp"

namespace edgefield {

namespace {

constexpr double kTailFraction = 0.2;
constexpr double kParetoWarn = 0.7;

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// log of the weighted mean of exp(ll) with weights exp(log_w)
double log_weighted_mean_exp(const Eigen::VectorXd& ll, const Eigen::VectorXd& log_w) {
  const double m = ll.maxCoeff();
  const double wmax = log_w.maxCoeff();
  const Eigen::ArrayXd w = (log_w.array() - wmax).exp();
  return m + std::log((w * (ll.array() - m).exp()).sum() / w.sum());
}

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

double pareto_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

std::string fixed2(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

DevianceStats deviance_stats(const Eigen::MatrixXd& pointwise, const Eigen::MatrixXd& linear_predictor,
                             const Eigen::VectorXd& y) {
  const Eigen::Index draws = pointwise.rows();
  if (draws == 0) throw ValidationError("deviance needs at least one draw");
  if (linear_predictor.rows() != draws || linear_predictor.cols() != pointwise.cols() || y.size() != pointwise.cols())
    throw ValidationError("pointwise and linear-predictor matrices disagree");
  double dbar = 0.0;
  for (Eigen::Index s = 0; s < draws; ++s) dbar += -2.0 * pointwise.row(s).sum();
  dbar /= static_cast<double>(draws);

  const Eigen::VectorXd psi_bar = linear_predictor.colwise().mean().transpose();
  Eigen::RowVectorXd plug(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) plug(i) = poisson_log_pmf(y(i), psi_bar(i));
  const double d_hat = -2.0 * plug.sum();

  DevianceStats out;
  out.dbar = dbar;
  out.pd = dbar - d_hat;
  out.dic = out.dbar + out.pd;
  return out;
}

DevianceStats deviance_stats(const PosteriorDraws& draws, const Dataset& data) {
  return deviance_stats(draws.pointwise, draws.linear_predictor, data.y);
}

WaicResult waic(const Eigen::MatrixXd& pointwise) {
  const Eigen::Index draws = pointwise.rows();
  const Eigen::Index n = pointwise.cols();
  if (draws < 2) throw ValidationError("WAIC needs at least two draws");
  WaicResult out;
  Eigen::VectorXd contrib(n);
  const double log_s = std::log(static_cast<double>(draws));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd col = pointwise.col(i);
    const double lppd_i = log_sum_exp(col) - log_s;
    const double p_i = sample_variance(col);
    out.lppd += lppd_i;
    out.p_waic += p_i;
    contrib(i) = -2.0 * (lppd_i - p_i);
  }
  out.waic = -2.0 * (out.lppd - out.p_waic);
  out.se = std::sqrt(static_cast<double>(n) * sample_variance(contrib));
  return out;
}

ParetoFit fit_generalized_pareto(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) throw ValidationError("Pareto fit needs at least two exceedances");
  constexpr double kPrior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const double x_star = x[static_cast<std::size_t>(std::floor(static_cast<double>(n) / 4.0 + 0.5)) - 1];
  const double x_max = x[n - 1];

  std::vector<double> theta(m), profile(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x_max + (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) /
                                 kPrior / x_star;
    double k = 0.0;
    for (double xi : x) k += std::log1p(-theta[j] * xi);
    k /= static_cast<double>(n);
    profile[j] = static_cast<double>(n) * (std::log(-theta[j] / k) - k - 1.0);
  }
  const double pmax = *std::max_element(profile.begin(), profile.end());
  double wsum = 0.0, theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(profile[j] - pmax);
    wsum += w;
    theta_hat += theta[j] * w;
  }
  theta_hat /= wsum;
  double k = 0.0;
  for (double xi : x) k += std::log1p(-theta_hat * xi);
  k /= static_cast<double>(n);
  ParetoFit fit;
  fit.sigma = -k / theta_hat;
  // shrink toward 0.5 with a weakly informative prior worth 10 observations
  fit.k = (static_cast<double>(n) * k + 0.5 * 10.0) / (static_cast<double>(n) + 10.0);
  return fit;
}

LooResult looic(const Eigen::MatrixXd& pointwise) {
  const Eigen::Index draws = pointwise.rows();
  const Eigen::Index n = pointwise.cols();
  if (draws < 2) throw ValidationError("LOO needs at least two draws");
  LooResult out;
  Eigen::VectorXd contrib(n);
  const auto tail_len = static_cast<Eigen::Index>(std::ceil(kTailFraction * static_cast<double>(draws)));

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd ll = pointwise.col(i);
    Eigen::VectorXd log_w = -ll;
    const double wmax = log_w.maxCoeff();
    log_w.array() -= wmax;
    double k = 0.0;

    const bool constant = (log_w.array() == 0.0).all();
    if (constant) {
      out.degenerate = true;
    } else if (tail_len >= 5 && draws - tail_len - 1 >= 0) {
      std::vector<Eigen::Index> order(draws);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return log_w(a) < log_w(b); });
      const double cutoff = log_w(order[draws - tail_len - 1]);
      const double exp_cutoff = std::exp(cutoff);
      std::vector<double> exceed(tail_len);
      for (Eigen::Index j = 0; j < tail_len; ++j) exceed[j] = std::exp(log_w(order[draws - tail_len + j])) - exp_cutoff;
      if (exceed.back() > 0.0) {
        // zero exceedances break the profile likelihood; nudge them
        for (auto& e : exceed) e = std::max(e, std::numeric_limits<double>::min());
        const auto fit = fit_generalized_pareto(exceed);
        k = fit.k;
        if (std::isfinite(k)) {
          for (Eigen::Index j = 0; j < tail_len; ++j) {
            const double p = (static_cast<double>(j) + 0.5) / static_cast<double>(tail_len);
            log_w(order[draws - tail_len + j]) = std::log(pareto_quantile(p, fit.k, fit.sigma) + exp_cutoff);
          }
          log_w = log_w.cwiseMin(0.0);
        }
      }
    } else {
      out.degenerate = true;
    }
    out.pareto_k.push_back(k);
    if (k > kParetoWarn) ++out.warnings;
    const double elpd_i = log_weighted_mean_exp(ll, log_w);
    out.elpd += elpd_i;
    contrib(i) = -2.0 * elpd_i;
  }
  out.looic = -2.0 * out.elpd;
  out.se = std::sqrt(static_cast<double>(n) * sample_variance(contrib));
  return out;
}

double rmse(const Eigen::MatrixXd& linear_predictor, const Eigen::VectorXd& target) {
  if (linear_predictor.rows() == 0) throw ValidationError("RMSE needs at least one draw");
  if (linear_predictor.cols() != target.size()) throw ValidationError("RMSE target has wrong length");
  const Eigen::VectorXd fitted = linear_predictor.array().exp().colwise().mean().transpose();
  return std::sqrt((target - fitted).squaredNorm() / static_cast<double>(target.size()));
}

double rmse(const PosteriorDraws& draws, const Dataset& data, const std::optional<Eigen::VectorXd>& truth) {
  return rmse(draws.linear_predictor, truth ? *truth : data.y);
}

CriteriaRow compute_criteria(const std::string& model, const PosteriorDraws& draws, const Dataset& data) {
  CriteriaRow row;
  row.model = model;
  const auto dev = deviance_stats(draws, data);
  row.dbar = dev.dbar;
  row.pd = dev.pd;
  row.dic = dev.dic;
  row.waic = waic(draws.pointwise).waic;
  const auto loo = looic(draws.pointwise);
  row.looic = loo.looic;
  row.pareto_k_warnings = loo.warnings;
  row.rmse = rmse(draws, data);
  return row;
}

std::string compare(const CriteriaTable& rows) {
  static const char* kHeaders[] = {"Dbar", "pD", "DIC", "WAIC", "LOOIC", "RMSE"};
  auto value = [](const CriteriaRow& r, int c) {
    switch (c) {
      case 0: return r.dbar;
      case 1: return r.pd;
      case 2: return r.dic;
      case 3: return r.waic;
      case 4: return r.looic;
      default: return r.rmse;
    }
  };
  std::vector<std::vector<std::string>> cells(rows.size(), std::vector<std::string>(6));
  for (int c = 0; c < 6; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
      if (!std::isnan(value(r, c))) best = std::min(best, value(r, c));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = value(rows[i], c);
      cells[i][c] = fixed2(v);
      if (rows.size() > 1 && !std::isnan(v) && v == best) cells[i][c] += "*";
    }
  }
  std::size_t model_w = 5;
  for (const auto& r : rows) model_w = std::max(model_w, r.model.size());
  std::vector<std::size_t> width(6);
  for (int c = 0; c < 6; ++c) {
    width[c] = std::string(kHeaders[c]).size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(model_w)) << "Model";
  for (int c = 0; c < 6; ++c) os << "  " << std::right << std::setw(static_cast<int>(width[c])) << kHeaders[c];
  os << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << std::left << std::setw(static_cast<int>(model_w)) << rows[i].model;
    for (int c = 0; c < 6; ++c) os << "  " << std::right << std::setw(static_cast<int>(width[c])) << cells[i][c];
    os << "\n";
  }
  if (rows.size() > 1) os << "(* lowest value in column)\n";
  return os.str();
}

std::string format_criteria(const CriteriaTable& rows) {
  std::string out = "model,Dbar,pD,DIC,WAIC,LOOIC,RMSE\n";
  for (const auto& r : rows) {
    out += r.model;
    for (double v : {r.dbar, r.pd, r.dic, r.waic, r.looic, r.rmse}) out += "," + csv::format_double(v);
    out += "\n";
  }
  return out;
}

CriteriaTable parse_criteria(const std::string& text) {
  const auto table = csv::parse(text);
  static const char* kCols[] = {"model", "Dbar", "pD", "DIC", "WAIC", "LOOIC", "RMSE"};
  int idx[7];
  for (int c = 0; c < 7; ++c) {
    idx[c] = table.column(kCols[c]);
    if (idx[c] < 0 && c != 5) throw ValidationError(std::string("criteria CSV lacks column ") + kCols[c]);
  }
  CriteriaTable rows;
  for (const auto& r : table.rows) {
    CriteriaRow row;
    row.model = r[idx[0]];
    row.dbar = csv::parse_double(r[idx[1]]);
    row.pd = csv::parse_double(r[idx[2]]);
    row.dic = csv::parse_double(r[idx[3]]);
    row.waic = csv::parse_double(r[idx[4]]);
    row.looic = idx[5] >= 0 ? csv::parse_double(r[idx[5]]) : std::numeric_limits<double>::quiet_NaN();
    row.rmse = csv::parse_double(r[idx[6]]);
    rows.push_back(std::move(row));
  }
  return rows;
}

CriteriaTable load_criteria(const std::filesystem::path& path) { return parse_criteria(csv::read_file(path)); }

}  // namespace edgefield
