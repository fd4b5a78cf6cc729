#include "edgefield/sampler.hpp"

#include <algorithm>
#include <memory>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include "json.hpp"

#include "edgefield/csv.hpp"
#include "edgefield/prior.hpp"

namespace edgefield {

namespace {

constexpr double kDivergenceThreshold = 1000.0;

struct DualAveraging {
  double mu = 0.0;
  double h_bar = 0.0;
  double log_step = 0.0;
  double log_step_bar = 0.0;
  int count = 0;

  void restart(double step) {
    mu = std::log(10.0 * step);
    h_bar = 0.0;
    log_step = std::log(step);
    log_step_bar = 0.0;
    count = 0;
  }

  double update(double accept, double target) {
    constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
    ++count;
    const double t = count;
    h_bar = (1.0 - 1.0 / (t + kT0)) * h_bar + (target - accept) / (t + kT0);
    log_step = mu - std::sqrt(t) / kGamma * h_bar;
    const double w = std::pow(t, -kKappa);
    log_step_bar = w * log_step + (1.0 - w) * log_step_bar;
    return std::exp(log_step);
  }
};

class Chain {
 public:
  Chain(const Target& target, const SamplerConfig& config, int chain_id)
      : target_(target),
        config_(config),
        engine_(rng::substream(config.seed, rng::Domain::chain, static_cast<std::uint64_t>(chain_id))),
        inv_metric_(Eigen::VectorXd::Ones(target.dim)),
        grad_(target.dim) {}

  const Eigen::MatrixXd& dense_inverse_metric() const { return inv_dense_; }

  ChainResult run() {
    initialize();
    ChainResult out;
    out.draws.resize(config_.samples, target_.dim);
    out.log_density.resize(config_.samples);
    out.accept_stat.resize(config_.samples);
    out.divergent = Eigen::VectorXi::Zero(config_.samples);

    const int warmup = config_.warmup;
    const bool adapt_metric = warmup >= 20;
    const int init_end = static_cast<int>(0.15 * warmup);
    const int mid = warmup / 2;
    const int term_begin = warmup - static_cast<int>(0.1 * warmup);

    step_ = initial_step();
    DualAveraging da;
    da.restart(step_);
    std::vector<Eigen::VectorXd> window;

    for (int it = 0; it < warmup + config_.samples; ++it) {
      bool divergent = false;
      const double accept = transition(divergent);
      if (it < warmup) {
        step_ = da.update(accept, config_.target_accept);
        if (adapt_metric && it >= init_end && it < term_begin) window.push_back(x_);
        if (adapt_metric && (it + 1 == mid || it + 1 == term_begin) && window.size() >= 10) {
          update_metric(window);
          window.clear();
          step_ = initial_step();
          da.restart(step_);
        }
        if (it + 1 == warmup) step_ = std::exp(da.log_step_bar);
      } else {
        const int s = it - warmup;
        out.draws.row(s) = x_.transpose();
        out.log_density(s) = logp_;
        out.accept_stat(s) = accept;
        if (divergent) {
          ++out.divergences;
          out.divergent(s) = 1;
        }
      }
    }
    if (warmup == 0) step_ = std::exp(da.log_step_bar);
    out.step_size = step_;
    out.inverse_metric = inv_metric_;
    return out;
  }

 private:
  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
    const double lp = target_.log_density_gradient(x, g);
    return std::isfinite(lp) && g.allFinite() ? lp : -std::numeric_limits<double>::infinity();
  }

  void initialize() {
    for (int attempt = 0; attempt < 100; ++attempt) {
      x_ = target_.initial_point(engine_);
      logp_ = eval(x_, grad_);
      if (std::isfinite(logp_)) return;
    }
    throw std::runtime_error("log density is not finite at the initial point after 100 attempts");
  }

  Eigen::VectorXd velocity(const Eigen::VectorXd& p) const {
    if (dense_) return inv_dense_ * p;
    return inv_metric_.cwiseProduct(p);
  }

  double kinetic(const Eigen::VectorXd& p) const { return 0.5 * p.dot(velocity(p)); }

  // p ~ N(0, M) with M^{-1} = L L^T, so p = L^{-T} z.
  Eigen::VectorXd draw_momentum() {
    Eigen::VectorXd p = rng::standard_normal(engine_, target_.dim);
    if (dense_) return chol_.transpose().triangularView<Eigen::Upper>().solve(p);
    return p.cwiseQuotient(inv_metric_.cwiseSqrt());
  }

  // Returns the Hamiltonian after `steps` leapfrog steps from (x, p).
  double leapfrog(Eigen::VectorXd& x, Eigen::VectorXd& p, Eigen::VectorXd& g, double& lp, double step,
                  int steps) const {
    for (int l = 0; l < steps; ++l) {
      p += 0.5 * step * g;
      x += step * velocity(p);
      lp = eval(x, g);
      if (!std::isfinite(lp)) return std::numeric_limits<double>::infinity();
      p += 0.5 * step * g;
    }
    return -lp + kinetic(p);
  }

  double initial_step() {
    double step = 0.1;
    Eigen::VectorXd p0 = draw_momentum();
    const double h0 = -logp_ + kinetic(p0);
    auto trial = [&](double eps) {
      Eigen::VectorXd x = x_, p = p0, g = grad_;
      double lp = logp_;
      const double h = leapfrog(x, p, g, lp, eps, 1);
      return std::isfinite(h) ? h0 - h : -std::numeric_limits<double>::infinity();
    };
    double delta = trial(step);
    const int direction = delta > std::log(0.8) ? 1 : -1;
    for (int i = 0; i < 60; ++i) {
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && delta > std::log(0.8)) break;
      step = direction == 1 ? step * 2.0 : step * 0.5;
      delta = trial(step);
    }
    return std::clamp(step, 1e-8, 10.0);
  }

  double transition(bool& divergent) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double nominal = config_.integration_time / step_;
    const double jitter = 0.8 + 0.4 * unif(engine_);
    const int steps = static_cast<int>(std::clamp(std::lround(nominal * jitter), 1L,
                                                  static_cast<long>(config_.max_leapfrog)));
    Eigen::VectorXd p = draw_momentum();
    const double h0 = -logp_ + kinetic(p);
    Eigen::VectorXd x = x_, g = grad_;
    double lp = logp_;
    const double h1 = leapfrog(x, p, g, lp, step_, steps);
    const double error = h1 - h0;
    divergent = !std::isfinite(error) || error > kDivergenceThreshold;
    const double accept = divergent ? 0.0 : std::min(1.0, std::exp(-error));
    if (!divergent && unif(engine_) < accept) {
      x_ = std::move(x);
      grad_ = std::move(g);
      logp_ = lp;
    }
    return accept;
  }

  void update_metric(const std::vector<Eigen::VectorXd>& window) {
    const double n = static_cast<double>(window.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(target_.dim);
    for (const auto& w : window) mean += w;
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(target_.dim);
    for (const auto& w : window) var += (w - mean).cwiseAbs2();
    var /= (n - 1.0);
    // shrink toward a small constant as in common windowed adaptation schemes
    inv_metric_ = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
    if (config_.metric != MetricKind::dense) return;

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(target_.dim, target_.dim);
    for (const auto& w : window) {
      const Eigen::VectorXd d = w - mean;
      cov.selfadjointView<Eigen::Lower>().rankUpdate(d);
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= (n - 1.0);
    cov *= n / (n + 5.0);
    cov.diagonal().array() += 1e-3 * (5.0 / (n + 5.0));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return;  // keep the diagonal metric
    inv_dense_ = std::move(cov);
    chol_ = llt.matrixL();
    dense_ = true;
  }

  const Target& target_;
  const SamplerConfig& config_;
  rng::Engine engine_;
  Eigen::VectorXd inv_metric_;
  bool dense_ = false;
  Eigen::MatrixXd inv_dense_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd x_;
  Eigen::VectorXd grad_;
  double logp_ = 0.0;
  double step_ = 0.1;
};

double mean_of(const Eigen::VectorXd& v) { return v.mean(); }

double variance_of(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

std::vector<Eigen::VectorXd> split_halves(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    out.emplace_back(c.head(half));
    out.emplace_back(c.tail(half));
  }
  return out;
}

bool all_constant(const std::vector<Eigen::VectorXd>& chains) {
  const double first = chains.front()(0);
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.size(); ++i)
      if (c(i) != first) return false;
  return true;
}

std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.size(); ++i) pooled.emplace_back(c(i), pooled.size());
  const std::size_t total = pooled.size();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a].first < pooled[b].first; });
  std::vector<double> rank(total);
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j + 1 < total && pooled[order[j + 1]].first == pooled[order[i]].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank for ties
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  const boost::math::normal standard;
  std::vector<Eigen::VectorXd> out;
  std::size_t pos = 0;
  const double denom = static_cast<double>(total) + 0.25;
  for (const auto& c : chains) {
    Eigen::VectorXd z(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) z(i) = boost::math::quantile(standard, (rank[pos++] - 0.375) / denom);
    out.push_back(std::move(z));
  }
  return out;
}

// Effective sample size of already-split chains (Geyer initial monotone sequence).
double ess_of_split(const std::vector<Eigen::VectorXd>& chains) {
  const std::size_t m = chains.size();
  const Eigen::Index n = chains.front().size();
  std::vector<Eigen::VectorXd> centered;
  Eigen::VectorXd chain_mean(m), chain_var(m);
  for (std::size_t j = 0; j < m; ++j) {
    chain_mean(j) = mean_of(chains[j]);
    centered.emplace_back(chains[j].array() - chain_mean(j));
    chain_var(j) = centered[j].squaredNorm() / static_cast<double>(n - 1);
  }
  auto mean_acov = [&](Eigen::Index lag) {
    double acc = 0.0;
    for (const auto& c : centered) acc += c.head(n - lag).dot(c.tail(n - lag)) / static_cast<double>(n);
    return acc / static_cast<double>(m);
  };
  const double mean_var = chain_var.mean();
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += variance_of(chain_mean);

  Eigen::VectorXd rho = Eigen::VectorXd::Zero(n + 1);
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho(0) = rho_even;
  rho(1) = rho_odd;
  Eigen::Index s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho(s + 1) = rho_even;
      rho(s + 2) = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (rho_even > 0.0) rho(max_s + 1) = rho_even;
  for (s = 1; s + 3 <= max_s; s += 2) {
    if (rho(s + 1) + rho(s + 2) > rho(s - 1) + rho(s)) {
      rho(s + 1) = 0.5 * (rho(s - 1) + rho(s));
      rho(s + 2) = rho(s + 1);
    }
  }
  const double total = static_cast<double>(m) * static_cast<double>(n);
  const double tau = -1.0 + 2.0 * rho.head(max_s).sum() + rho(max_s + 1);
  return std::min(total / tau, total * std::log10(total));
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw ValidationError("chains must be >= 1");
  if (warmup < 1 || samples < 1) throw ValidationError("warmup and samples must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("target_accept must lie in (0, 1)");
  if (max_leapfrog < 1) throw ValidationError("max_leapfrog must be >= 1");
  if (!(integration_time > 0.0)) throw ValidationError("integration_time must be positive");
}

MetricKind parse_metric(const std::string& name) {
  if (name == "diag") return MetricKind::diag;
  if (name == "dense") return MetricKind::dense;
  throw ValidationError("unknown metric '" + name + "' (expected diag or dense)");
}

int worker_count(int requested) {
  int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("EDGEFIELD_THREADS")) {
    try {
      const auto v = csv::parse_int(env);
      if (v >= 1) cap = static_cast<int>(v);
    } catch (const ValidationError&) {
    }
  }
  return requested > 0 ? std::min(requested, cap) : cap;
}

std::vector<ChainResult> run_hmc(const Target& target, const SamplerConfig& config) {
  config.validate();
  std::vector<ChainResult> results(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < config.chains; c = next++) {
      try {
        results[c] = Chain(target, config, c).run();
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const int workers = std::min(worker_count(config.threads), config.chains);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

namespace {

// Coordinates the chains move in. Two unit-free changes of variable are
// applied to the model's unconstrained vector:
//  * intercept shear: the alpha slot holds a = alpha + w^T latent with
//    w^T latent the mean of the linear part of theta. Data pin a tightly,
//    while alpha alone drifts with the constant component of the latent field.
//  * non-centred latent block (optional): latent = scale * D^{-1/2} V S(dep) z
//    with N = D^{-1/2} W D^{-1/2} = V diag(lambda) V^T and
//    S = diag((1 - dep lambda)^{-1/2}), so the Gaussian prior becomes N(0, I).
//    The eigenvectors are computed once; no per-step factorization.
//  * skewed edge model, centred: the latent slot holds rho = eps + eta delta
//    itself. The likelihood then depends on the latent slot alone and the
//    chain can trade between eps and the skew term without moving theta,
//    which is the path between the symmetric and skewed explanations of a
//    sharp band. Unit Jacobian.
class SamplingCoordinates {
 public:
  SamplingCoordinates(const PoissonModel& model, bool noncentered) : model_(&model), noncentered_(noncentered) {
    const auto& L = model.layout();
    const double n = static_cast<double>(model.data().n());
    if (model.spec().variant == Variant::car) {
      w_ = Eigen::VectorXd::Constant(L.latent_len, 1.0 / n);
    } else {
      const auto& c = model.structure().incidence;
      w_ = (Eigen::RowVectorXd::Ones(c.rows()) * c).transpose() / n;
    }
    shift_ = !noncentered_ && model.spec().variant == Variant::renege_sk;
    if (noncentered_) {
      const auto& k = model.kernel();
      inv_sqrt_d_ = k.degrees.cwiseSqrt().cwiseInverse();
      const Eigen::MatrixXd norm = inv_sqrt_d_.asDiagonal() * Eigen::MatrixXd(k.adjacency) * inv_sqrt_d_.asDiagonal();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(norm);
      if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
      basis_ = eig.eigenvectors();
      lambda_ = eig.eigenvalues().cwiseMax(-1.0).cwiseMin(1.0);
      half_log_d_ = 0.5 * k.degrees.array().log().sum();
    }
  }

  // Model vector and log |dx/dz|.
  Eigen::VectorXd to_model(const Eigen::VectorXd& z, double* log_jac = nullptr) const {
    const auto& L = model_->layout();
    Eigen::VectorXd x = z;
    auto lat = x.segment(L.latent, L.latent_len);
    double lj = 0.0;
    if (noncentered_) {
      const double dep = dependence(z(L.dependence));
      const double scale = std::exp(z(L.log_scale));
      const Eigen::ArrayXd s = (1.0 - dep * lambda_.array()).rsqrt();
      lat = scale * inv_sqrt_d_.cwiseProduct(basis_ * (s * z.segment(L.latent, L.latent_len).array()).matrix());
      lj = static_cast<double>(L.latent_len) * z(L.log_scale) - half_log_d_ + s.log().sum();
    }
    x(L.alpha) -= w_.dot(lat);
    if (shift_) lat -= skew_offset(z);
    if (log_jac) *log_jac = lj;
    return x;
  }

  Eigen::VectorXd from_model(const Eigen::VectorXd& x) const {
    const auto& L = model_->layout();
    Eigen::VectorXd z = x;
    if (shift_) z.segment(L.latent, L.latent_len) += skew_offset(x);
    const auto lat = z.segment(L.latent, L.latent_len);
    z(L.alpha) += w_.dot(lat);
    if (noncentered_) {
      const double dep = dependence(x(L.dependence));
      const double scale = std::exp(x(L.log_scale));
      const Eigen::ArrayXd s = (1.0 - dep * lambda_.array()).rsqrt();
      const Eigen::ArrayXd h = basis_.transpose() * lat.cwiseQuotient(inv_sqrt_d_);
      z.segment(L.latent, L.latent_len) = (h / (s * scale)).matrix();
    }
    return z;
  }

  double log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const {
    const auto& L = model_->layout();
    double lj = 0.0;
    const Eigen::VectorXd x = to_model(z, &lj);
    const double lp = model_->log_posterior_gradient(x, g);
    // total derivative in the latent block with a held fixed
    Eigen::VectorXd g_lat = g.segment(L.latent, L.latent_len) - g(L.alpha) * w_;
    if (!noncentered_) {
      if (shift_) {
        const Eigen::VectorXd g_eps = g.segment(L.latent, L.latent_len);
        const double sigma_eta = std::exp(z(L.log_sigma_eta));
        const double u = std::exp(z(L.log_u));
        const double delta = u - kSkewCentering;
        const Eigen::VectorXd dir = direction(z);
        const double g_dir = g_eps.dot(dir);
        const Eigen::VectorXd basis_t_g =
            model_->basis() ? Eigen::VectorXd(model_->basis()->transpose() * g_eps) : g_eps;
        g.segment(L.skew, L.skew_len) -= sigma_eta * delta * basis_t_g;
        g(L.log_sigma_eta) -= sigma_eta * delta * g_dir;
        g(L.log_u) -= sigma_eta * u * g_dir;
      }
      g.segment(L.latent, L.latent_len) = g_lat;
      return lp;
    }
    const double u = z(L.dependence);
    const double sg = 1.0 / (1.0 + std::exp(-u));
    const double width = model_->dependence_upper() - model_->dependence_lower();
    const double dep = model_->dependence_lower() + width * sg;
    const double scale = std::exp(z(L.log_scale));
    const auto zl = z.segment(L.latent, L.latent_len).array();
    const Eigen::ArrayXd s = (1.0 - dep * lambda_.array()).rsqrt();
    const Eigen::ArrayXd h = basis_.transpose() * inv_sqrt_d_.cwiseProduct(g_lat);
    const auto lat = x.segment(L.latent, L.latent_len);

    const double d_dep = scale * (h * 0.5 * lambda_.array() * s.cube() * zl).sum() +
                         0.5 * (lambda_.array() * s.square()).sum();
    g(L.dependence) += d_dep * width * sg * (1.0 - sg);
    g(L.log_scale) += g_lat.dot(lat) + static_cast<double>(L.latent_len);
    g.segment(L.latent, L.latent_len) = (scale * s * h).matrix();
    return lp + lj;
  }

 private:
  double dependence(double u) const {
    const double sg = 1.0 / (1.0 + std::exp(-u));
    return model_->dependence_lower() + (model_->dependence_upper() - model_->dependence_lower()) * sg;
  }

  Eigen::VectorXd direction(const Eigen::VectorXd& v) const {
    const auto& L = model_->layout();
    const auto coef = v.segment(L.skew, L.skew_len);
    return model_->basis() ? Eigen::VectorXd(*model_->basis() * coef) : Eigen::VectorXd(coef);
  }

  // eta * delta; the skew slots are shared by both coordinate systems
  Eigen::VectorXd skew_offset(const Eigen::VectorXd& v) const {
    const auto& L = model_->layout();
    const double sigma_eta = std::exp(v(L.log_sigma_eta));
    const double delta = std::exp(v(L.log_u)) - kSkewCentering;
    return sigma_eta * delta * direction(v);
  }

  const PoissonModel* model_;
  bool noncentered_;
  bool shift_ = false;
  Eigen::VectorXd w_;
  Eigen::VectorXd inv_sqrt_d_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd lambda_;
  double half_log_d_ = 0.0;
};

}  // namespace

Target make_target(const PoissonModel& model, bool noncentered) {
  auto coords = std::make_shared<SamplingCoordinates>(model, noncentered);
  Target t;
  t.dim = model.dim();
  t.log_density_gradient = [coords](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    return coords->log_density_gradient(z, g);
  };
  t.initial_point = [&model, coords](rng::Engine& e) { return coords->from_model(model.initial_point(e)); };
  return t;
}

int PosteriorDraws::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::vector<Eigen::VectorXd> PosteriorDraws::chain_columns(int col) const {
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < chains; ++c) out.emplace_back(constrained.col(col).segment(c * samples, samples));
  return out;
}

const ChainStat& Diagnostics::rhat_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no diagnostic for " + name);
  return rhat[it - names.begin()];
}

const ChainStat& Diagnostics::ess_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no diagnostic for " + name);
  return ess_bulk[it - names.begin()];
}

ChainStat split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw ValidationError("split R-hat needs at least two chains");
  for (const auto& c : chains)
    if (c.size() < 4) throw ValidationError("split R-hat needs chains of length >= 4");
  if (all_constant(chains)) return {1.0, true};
  const auto split = split_halves(chains);
  const double n = static_cast<double>(split.front().size());
  Eigen::VectorXd means(split.size()), vars(split.size());
  for (std::size_t j = 0; j < split.size(); ++j) {
    means(j) = mean_of(split[j]);
    vars(j) = variance_of(split[j]);
  }
  const double within = vars.mean();
  if (!(within > 0.0)) return {1.0, true};
  const double between = n * variance_of(means);
  const double var_plus = (n - 1.0) / n * within + between / n;
  return {std::sqrt(var_plus / within), false};
}

ChainStat ess_bulk(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw ValidationError("ESS needs at least one chain");
  double total = 0.0;
  for (const auto& c : chains) {
    if (c.size() < 8) throw ValidationError("ESS needs chains of length >= 8");
    total += static_cast<double>(c.size());
  }
  if (all_constant(chains)) return {total, true};
  const auto split = split_halves(rank_normalize(chains));
  return {ess_of_split(split), false};
}

Diagnostics diagnose(const PosteriorDraws& draws, const std::vector<ChainResult>& chains) {
  Diagnostics d;
  d.names = draws.names;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t col = 0; col < draws.names.size(); ++col) {
    const auto cols = draws.chain_columns(static_cast<int>(col));
    d.rhat.push_back(draws.chains >= 2 && draws.samples >= 4 ? split_rhat(cols) : ChainStat{nan, true});
    d.ess_bulk.push_back(draws.samples >= 8 ? ess_bulk(cols) : ChainStat{nan, true});
  }
  double accept = 0.0;
  for (const auto& c : chains) {
    d.divergence_count += c.divergences;
    accept += c.accept_stat.mean();
    d.step_sizes.push_back(c.step_size);
  }
  d.mean_accept = chains.empty() ? 0.0 : accept / static_cast<double>(chains.size());
  return d;
}

FitResult run_chains(const PoissonModel& model, const SamplerConfig& config) {
  const auto chains = run_hmc(make_target(model, config.noncentered), config);
  const SamplingCoordinates coords(model, config.noncentered);
  FitResult out;
  auto& dr = out.draws;
  dr.chains = config.chains;
  dr.samples = config.samples;
  dr.names = model.constrained_names();
  const int total = dr.size();
  const int n = model.data().n();
  dr.unconstrained.resize(total, model.dim());
  dr.constrained.resize(total, model.dim());
  dr.log_post.resize(total);
  dr.pointwise.resize(total, n);
  dr.linear_predictor.resize(total, n);
  const bool edges = model.spec().variant != Variant::car;
  if (edges) dr.edge_effects.resize(total, model.structure().p());
  for (int c = 0; c < config.chains; ++c) {
    for (int s = 0; s < config.samples; ++s) {
      const int row = c * config.samples + s;
      const Eigen::VectorXd x = coords.to_model(chains[c].draws.row(s).transpose());
      dr.unconstrained.row(row) = x.transpose();
      dr.constrained.row(row) = model.constrained_row(x).transpose();
      dr.log_post(row) = model.log_posterior(x);
      const Eigen::VectorXd psi = model.linear_predictor(x);
      dr.linear_predictor.row(row) = psi.transpose();
      for (int i = 0; i < n; ++i) dr.pointwise(row, i) = poisson_log_pmf(model.data().y(i), psi(i));
      if (edges) dr.edge_effects.row(row) = model.edge_effects(x).transpose();
    }
  }
  out.diagnostics = diagnose(dr, chains);
  return out;
}

std::string format_draws(const PosteriorDraws& draws) {
  std::string out = "chain,iter,log_post";
  for (const auto& name : draws.names) out += "," + name;
  out += "\n";
  for (int c = 0; c < draws.chains; ++c)
    for (int s = 0; s < draws.samples; ++s) {
      const int row = c * draws.samples + s;
      out += std::to_string(c + 1) + "," + std::to_string(s + 1) + "," + csv::format_double(draws.log_post(row));
      for (Eigen::Index j = 0; j < draws.constrained.cols(); ++j)
        out += "," + csv::format_double(draws.constrained(row, j));
      out += "\n";
    }
  return out;
}

std::string format_diagnostics(const Diagnostics& d) {
  nlohmann::ordered_json j;
  j["divergence_count"] = d.divergence_count;
  j["mean_accept"] = d.mean_accept;
  j["step_sizes"] = d.step_sizes;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < d.names.size(); ++i) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
    params[d.names[i]] = {{"rhat", num(d.rhat[i].value)},
                          {"ess_bulk", num(d.ess_bulk[i].value)},
                          {"degenerate", d.rhat[i].degenerate || d.ess_bulk[i].degenerate}};
  }
  j["parameters"] = std::move(params);
  return j.dump(2) + "\n";
}

}  // namespace edgefield
