#include "edgefield/prior.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "edgefield/csv.hpp"
#include "edgefield/rng.hpp"

namespace edgefield {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

void check_scale(double v, const char* name) {
  if (!std::isfinite(v) || !(v > 0.0))
    throw ValidationError(std::string(name) + " must be positive, got " + csv::format_double(v));
}

}  // namespace

Eigen::VectorXd SkewnessSpec::eta() const {
  if (basis) return sigma_eta * (*basis * coefficients);
  return sigma_eta * coefficients;
}

void SkewnessSpec::validate(int p) const {
  if (!(sigma_eta >= 0.0) || !std::isfinite(sigma_eta)) throw ValidationError("sigma_eta must be >= 0");
  if (!coefficients.allFinite()) throw ValidationError("skewness coefficients must be finite");
  if (!basis) {
    if (coefficients.size() != p) throw ValidationError("eta_raw length must equal the edge count");
    return;
  }
  if (basis->rows() != p || basis->cols() > p || basis->cols() != coefficients.size())
    throw ValidationError("low-rank basis dimensions are inconsistent");
  const Eigen::MatrixXd gram = basis->transpose() * *basis;
  if (!gram.isApprox(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()), 1e-8))
    throw ValidationError("low-rank basis columns must be orthonormal");
}

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& a) {
  static constexpr double kJitter[] = {0.0, 1e-12, 1e-10, 1e-8};
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  for (double jitter : kJitter) {
    Eigen::MatrixXd m = a;
    m.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw std::runtime_error("covariance factorization failed after jitter retries");
}

Eigen::MatrixXd gaussian_node_covariance(double gamma, double sigma_theta2, const SpatialStructure& s) {
  s.line.check(gamma);
  check_scale(sigma_theta2, "sigma_theta2");
  const Eigen::MatrixXd c = Eigen::MatrixXd(s.incidence);
  const Eigen::LLT<Eigen::MatrixXd> llt(s.line.dense(gamma));
  if (llt.info() != Eigen::Success) throw std::runtime_error("edge precision is not positive definite");
  Eigen::MatrixXd cov = sigma_theta2 * c * llt.solve(c.transpose());
  return 0.5 * (cov + cov.transpose());
}

PriorMoments prior_moments(const RenegeSkPrior& prior, const SpatialStructure& s) {
  if (prior.eta.size() != s.p()) throw ValidationError("eta length must equal the edge count");
  PriorMoments m;
  m.mean = Eigen::VectorXd::Zero(s.n());
  const Eigen::VectorXd c_eta = s.incidence * prior.eta;
  m.cov = gaussian_node_covariance(prior.gamma, prior.sigma_theta2, s);
  m.cov.noalias() += (1.0 - 2.0 / std::numbers::pi) * c_eta * c_eta.transpose();
  return m;
}

FieldSimulator::FieldSimulator(Prior prior, const SpatialStructure& s) : prior_(std::move(prior)), s_(&s) {
  std::visit(
      [&](const auto& pr) {
        using T = std::decay_t<decltype(pr)>;
        if constexpr (std::is_same_v<T, CarPrior>) {
          if (!s.node) throw ValidationError("CAR prior needs every region to have a neighbour");
          s.node->check(pr.varsigma);
          check_scale(pr.tau2, "tau2");
          node_level_ = true;
          scale_ = std::sqrt(pr.tau2);
          factor_ = robust_cholesky(s.node->dense(pr.varsigma));
        } else {
          s.line.check(pr.gamma);
          check_scale(pr.sigma_theta2, "sigma_theta2");
          scale_ = std::sqrt(pr.sigma_theta2);
          factor_ = robust_cholesky(s.line.dense(pr.gamma));
          if constexpr (std::is_same_v<T, RenegeSkPrior>) {
            if (pr.eta.size() != s.p()) throw ValidationError("eta length must equal the edge count");
            if (!pr.eta.allFinite()) throw ValidationError("eta must be finite");
            eta_ = pr.eta;
          } else {
            eta_ = Eigen::VectorXd::Zero(s.p());
          }
        }
      },
      prior_);
}

FieldDraw FieldSimulator::draw(std::uint64_t seed, std::uint64_t index) const {
  auto engine = rng::substream(seed, rng::Domain::field_draw, index);
  FieldDraw out;
  if (node_level_) {
    const Eigen::VectorXd z = rng::standard_normal(engine, s_->n());
    out.theta = scale_ * factor_.transpose().triangularView<Eigen::Upper>().solve(z);
    return out;
  }
  std::normal_distribution<double> normal;
  const double u = std::abs(normal(engine));
  const Eigen::VectorXd z = rng::standard_normal(engine, s_->p());
  const Eigen::VectorXd eps = scale_ * factor_.transpose().triangularView<Eigen::Upper>().solve(z);
  const double b = std::holds_alternative<RenegeSkPrior>(prior_) ? std::get<RenegeSkPrior>(prior_).b
                                                                 : kSkewCentering;
  out.rho = -b * eta_ + eta_ * u + eps;
  out.theta = s_->incidence * out.rho;
  out.u = u;
  return out;
}

std::vector<FieldDraw> simulate_field(const Prior& prior, const SpatialStructure& s, int n_draws,
                                      std::uint64_t seed) {
  if (n_draws < 1) throw ValidationError("draws must be >= 1");
  const FieldSimulator sim(prior, s);
  std::vector<FieldDraw> out;
  out.reserve(n_draws);
  for (int j = 0; j < n_draws; ++j) out.push_back(sim.draw(seed, static_cast<std::uint64_t>(j)));
  return out;
}

double log_normal_cdf(double z) {
  if (z > -30.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // asymptotic tail expansion of Mills' ratio
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - 0.5 * kLogTwoPi - std::log(-z) + std::log(series);
}

double sn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& loc, const Eigen::MatrixXd& sigma,
                      const Eigen::VectorXd& eta) {
  const Eigen::Index q = x.size();
  if (loc.size() != q || eta.size() != q || sigma.rows() != q || sigma.cols() != q)
    throw ValidationError("dimension mismatch in skew-normal density");
  const Eigen::LLT<Eigen::MatrixXd> sigma_llt(sigma);
  if (sigma_llt.info() != Eigen::Success) throw ValidationError("Sigma is not symmetric positive definite");

  const Eigen::MatrixXd omega = sigma + eta * eta.transpose();
  const Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) throw ValidationError("Sigma + eta eta^T is not positive definite");

  const Eigen::VectorXd diff = x - loc;
  const Eigen::VectorXd white = llt.matrixL().solve(diff);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_phi = -0.5 * (static_cast<double>(q) * kLogTwoPi + log_det + white.squaredNorm());

  // 1 - eta^T Omega^{-1} eta = 1 / (1 + eta^T Sigma^{-1} eta)
  const double kappa = eta.dot(sigma_llt.solve(eta));
  const double slant = eta.dot(llt.solve(diff)) * std::sqrt(1.0 + kappa);
  return std::numbers::ln2 + log_phi + log_normal_cdf(slant);
}

Eigen::MatrixXd build_lowrank_basis(const LineGraphStructure& lg, int k) {
  const int p = lg.size();
  int components = 0;
  connected_components(lg.adjacency, &components);
  if (k < 1 || k > p - components)
    throw ValidationError("low-rank dimension " + std::to_string(k) + " must lie in [1, " +
                          std::to_string(p - components) + "]");

  Eigen::MatrixXd laplacian = -Eigen::MatrixXd(lg.adjacency);
  laplacian.diagonal() += lg.degrees;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
  if (solver.info() != Eigen::Success) throw std::runtime_error("Laplacian eigen-decomposition failed");

  Eigen::MatrixXd basis = solver.eigenvectors().middleCols(components, k);
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, j) < 0.0) basis.col(j) *= -1.0;
  }
  return basis;
}

}  // namespace edgefield
