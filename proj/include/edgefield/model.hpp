#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgefield/graph.hpp"

namespace edgefield {

enum class Variant { car, renege, renege_sk };

Variant parse_variant(const std::string& name);  // car | renege | renege-sk (or renege_sk)
std::string variant_name(Variant v);             // car | renege | renege-sk

struct Dataset {
  Eigen::VectorXd y;         // nonnegative integer counts
  Eigen::VectorXd expected;  // positive offsets E_i
  Eigen::MatrixXd x;         // n x k covariates, k may be 0

  int n() const { return static_cast<int>(y.size()); }
  int k() const { return static_cast<int>(x.cols()); }
  void validate(int n_regions) const;
};

// Data CSV: `id,y,expected[,x1,...,xk]` with ids 0..n-1 in any order.
Dataset parse_dataset(const std::string& text, int n_regions);
Dataset load_dataset(const std::filesystem::path& path, int n_regions);
std::string format_dataset(const Dataset& d);

struct ModelSpec {
  Variant variant = Variant::renege_sk;
  double a_tau = 1.0;      // Gamma shape for the precision sigma_theta^{-2}
  double b_tau = 1.0;      // Gamma rate
  double alpha_var = 10.0;
  double beta_sd = 5.0;
  std::optional<int> lowrank;  // k columns of the Laplacian basis; full eta_raw when absent

  void validate() const;
};

// Fixed block layout of the unconstrained parameter vector. Offsets of absent
// blocks are -1 and their lengths are 0.
struct ParamLayout {
  int alpha = 0;
  int beta = 1, beta_len = 0;
  int dependence = -1;  // logit of gamma (or varsigma) over the prior support
  int log_scale = -1;   // log sigma_theta (or log tau_theta)
  int log_u = -1;
  int log_sigma_eta = -1;
  int latent = -1, latent_len = 0;  // eps (length p) or theta (length n, CAR)
  int skew = -1, skew_len = 0;      // eta_raw (length p) or w (length k)
  int dim = 0;

  std::vector<std::string> names() const;  // unconstrained coordinates
};

// Constrained values of one parameter vector, in draws-CSV column order:
// alpha, beta.1..k, gamma, sigma_theta[, sigma_eta, u], eps.1..p | theta.1..n[, eta_raw.1..p | w.1..k]
struct Constrained {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  double dependence = 0.0;  // gamma, or varsigma for CAR
  double scale = 1.0;       // sigma_theta, or tau_theta for CAR
  double sigma_eta = 0.0;
  double u = 0.0;
  Eigen::VectorXd latent;
  Eigen::VectorXd skew;
};

struct LogPosteriorTerms {
  double likelihood = 0.0;    // Poisson log-likelihood
  double latent_prior = 0.0;  // Gaussian edge (or CAR) prior on the latent block
  double skew_prior = 0.0;    // U, sigma_eta and eta_raw priors with their Jacobians
  double hyper_prior = 0.0;   // alpha, beta, dependence, scale priors with Jacobians
  double total() const { return likelihood + latent_prior + skew_prior + hyper_prior; }
};

// Poisson log-linear hierarchy
//   y_i ~ Poisson(exp(psi_i)),  psi_i = alpha + x_i^T beta + log E_i + theta_i,
// with theta = C(-b eta + eta U + eps) (renege_sk), C eps (renege) or theta
// itself under a proper CAR prior (car).
class PoissonModel {
 public:
  PoissonModel(const SpatialStructure& s, Dataset data, ModelSpec spec);

  int dim() const { return layout_.dim; }
  const ParamLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }
  const SpatialStructure& structure() const { return *s_; }
  const DependenceKernel& kernel() const { return *kernel_; }

  // Support of the uniform prior on the dependence parameter: validity
  // interval intersected with (0, 1).
  double dependence_lower() const { return dep_lo_; }
  double dependence_upper() const { return dep_hi_; }

  double log_posterior(const Eigen::VectorXd& x) const;
  double log_posterior_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  LogPosteriorTerms terms(const Eigen::VectorXd& x) const;

  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& x) const;
  Eigen::VectorXd pointwise_loglik(const Eigen::VectorXd& x) const;
  Eigen::VectorXd edge_effects(const Eigen::VectorXd& x) const;  // rho; empty for CAR

  Constrained constrain(const Eigen::VectorXd& x) const;
  Eigen::VectorXd unconstrain(const Constrained& c) const;

  std::vector<std::string> constrained_names() const;
  Eigen::VectorXd constrained_row(const Eigen::VectorXd& x) const;

  // Uniform(-0.5, 0.5) on every unconstrained coordinate except the latent
  // block and eta_raw / w, which start at zero.
  Eigen::VectorXd initial_point(std::mt19937_64& engine) const;

  const Eigen::MatrixXd* basis() const { return basis_ ? &*basis_ : nullptr; }

 private:
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, LogPosteriorTerms* terms) const;
  Eigen::VectorXd theta_of(const Eigen::VectorXd& x) const;

  const SpatialStructure* s_;
  Dataset data_;
  ModelSpec spec_;
  ParamLayout layout_;
  const DependenceKernel* kernel_;
  double dep_lo_ = 0.0, dep_hi_ = 1.0;
  Eigen::VectorXd log_expected_;
  Eigen::VectorXd log_y_factorial_;
  std::optional<Eigen::MatrixXd> basis_;
};

double poisson_log_pmf(double y, double psi);

}  // namespace edgefield
