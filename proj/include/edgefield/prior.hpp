#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "edgefield/graph.hpp"

namespace edgefield {

/// Centering constant of the half-normal auxiliary variable, E|Z| = sqrt(2/pi).
inline const double kSkewCentering = std::sqrt(2.0 / std::numbers::pi);

/// Proper CAR prior on regions: theta ~ N(0, tau2 (M - varsigma A)^{-1}).
struct CarPrior {
  double varsigma = 0.5;
  double tau2 = 1.0;
};

/// Gaussian edge prior: rho ~ N(0, sigma_theta2 (M_e - gamma A_e)^{-1}), theta = C rho.
struct RenegePrior {
  double gamma = 0.5;
  double sigma_theta2 = 1.0;
};

/// Skew-normal edge prior through its stochastic representation
///   rho = -b eta + eta U + eps,  U = |Z|,  eps ~ N(0, sigma_theta2 (M_e - gamma A_e)^{-1}).
/// With eta = 0 it is the Gaussian edge prior.
struct RenegeSkPrior {
  double gamma = 0.5;
  double sigma_theta2 = 1.0;
  Eigen::VectorXd eta;
  double b = kSkewCentering;
};

using Prior = std::variant<CarPrior, RenegePrior, RenegeSkPrior>;

/// Hierarchical skewness: eta = sigma_eta * eta_raw in full mode, or
/// eta = sigma_eta * B w with an orthonormal p x k basis in low-rank mode.
struct SkewnessSpec {
  Eigen::VectorXd coefficients;  // eta_raw (length p) or w (length k)
  double sigma_eta = 0.0;
  std::optional<Eigen::MatrixXd> basis;

  Eigen::VectorXd eta() const;
  void validate(int p) const;
};

struct FieldDraw {
  Eigen::VectorXd rho;     // empty for CAR
  Eigen::VectorXd theta;
  std::optional<double> u;  // absent for CAR
};

struct PriorMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Mean and covariance of theta = C rho under the skew-normal edge prior:
//   E theta = 0,
//   V theta = (1 - 2/pi) (C eta)(C eta)^T + sigma_theta2 C (M_e - gamma A_e)^{-1} C^T.
PriorMoments prior_moments(const RenegeSkPrior& prior, const SpatialStructure& s);

// Gaussian part only: sigma_theta2 C (M_e - gamma A_e)^{-1} C^T.
Eigen::MatrixXd gaussian_node_covariance(double gamma, double sigma_theta2, const SpatialStructure& s);

// Draw j uses rng::substream(seed, field_draw, j). The Gaussian edge prior runs
// the skew-normal path with eta = 0, so the two agree bit-for-bit.
std::vector<FieldDraw> simulate_field(const Prior& prior, const SpatialStructure& s, int n_draws,
                                      std::uint64_t seed);

// Factorizes the precision once; draw(seed, j) is then a pure function of (seed, j).
class FieldSimulator {
 public:
  FieldSimulator(Prior prior, const SpatialStructure& s);
  FieldDraw draw(std::uint64_t seed, std::uint64_t index) const;

 private:
  Prior prior_;
  const SpatialStructure* s_;
  Eigen::VectorXd eta_;     // zero for the Gaussian edge prior
  Eigen::MatrixXd factor_;  // lower Cholesky factor of the precision
  double scale_ = 1.0;
  bool node_level_ = false;
};

/// Log density of loc + eta U + eps with U half-normal and eps ~ N(0, Sigma):
///   log 2 + log phi_q(x; loc, Omega) + log Phi(eta^T Omega^{-1} (x - loc) / sqrt(1 - eta^T Omega^{-1} eta)),
/// where Omega = Sigma + eta eta^T.
double sn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& loc, const Eigen::MatrixXd& sigma,
                      const Eigen::VectorXd& eta);

// Orthonormal eigenvectors of the line-graph Laplacian M_e - A_e for the k
// smallest nonzero eigenvalues; columns are sign-normalized so the entry with
// the largest magnitude is positive.
Eigen::MatrixXd build_lowrank_basis(const LineGraphStructure& lg, int k);

// Numerically safe log of the standard normal CDF.
double log_normal_cdf(double z);

// Symmetric factorization with jitter escalation 1e-12, 1e-10, 1e-8 on failure.
// Returns the lower Cholesky factor of (a + jitter I).
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& a);

}  // namespace edgefield
