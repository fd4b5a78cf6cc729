#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgefield/model.hpp"
#include "edgefield/sampler.hpp"

namespace edgefield {

/// One row of a model-comparison table. Missing criteria are NaN.
struct CriteriaRow {
  std::string model;
  double dbar = 0.0;
  double pd = 0.0;
  double dic = 0.0;
  double waic = 0.0;
  double looic = 0.0;
  double rmse = 0.0;
  int pareto_k_warnings = 0;
};

using CriteriaTable = std::vector<CriteriaRow>;

struct DevianceStats {
  double dbar = 0.0;
  double pd = 0.0;
  double dic = 0.0;
};

struct WaicResult {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
  double se = 0.0;  // standard error of WAIC from pointwise contributions
};

struct LooResult {
  double elpd = 0.0;
  double looic = 0.0;
  double se = 0.0;
  std::vector<double> pareto_k;
  int warnings = 0;        // count of k > 0.7
  bool degenerate = false; // plain importance sampling was used for some area
};

// D(s) = -2 sum_i log p(y_i | draw s); pD = Dbar - D(psi_bar) with the plug-in
// at the posterior mean of the linear predictor.
DevianceStats deviance_stats(const Eigen::MatrixXd& pointwise, const Eigen::MatrixXd& linear_predictor,
                             const Eigen::VectorXd& y);
DevianceStats deviance_stats(const PosteriorDraws& draws, const Dataset& data);

WaicResult waic(const Eigen::MatrixXd& pointwise);

// Pareto-smoothed importance sampling leave-one-out.
LooResult looic(const Eigen::MatrixXd& pointwise);

struct ParetoFit {
  double k = 0.0;
  double sigma = 0.0;
};
// Generalized Pareto fit to positive exceedances (ascending), empirical-Bayes
// profile estimator with a weakly informative prior on k.
ParetoFit fit_generalized_pareto(const std::vector<double>& sorted_exceedances);

// sqrt(mean((target_i - mu_hat_i)^2)), mu_hat_i = posterior mean of exp(psi_i).
double rmse(const Eigen::MatrixXd& linear_predictor, const Eigen::VectorXd& target);
double rmse(const PosteriorDraws& draws, const Dataset& data,
            const std::optional<Eigen::VectorXd>& truth = std::nullopt);

CriteriaRow compute_criteria(const std::string& model, const PosteriorDraws& draws, const Dataset& data);

// Aligned text table in the column order Dbar, pD, DIC, WAIC, LOOIC, RMSE with
// the lowest value per column marked by '*' when more than one model is shown.
std::string compare(const CriteriaTable& rows);

// `model,Dbar,pD,DIC,WAIC,LOOIC,RMSE`
std::string format_criteria(const CriteriaTable& rows);
CriteriaTable parse_criteria(const std::string& text);
CriteriaTable load_criteria(const std::filesystem::path& path);

}  // namespace edgefield
