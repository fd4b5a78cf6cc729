#include "edgefield/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "edgefield/csv.hpp"
#include "edgefield/prior.hpp"

namespace edgefield {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kLogHalfNormalNorm = std::numbers::ln2 - 0.5 * kLogTwoPi;  // log(2 / sqrt(2 pi))

double sigmoid(double g) {
  return g >= 0.0 ? 1.0 / (1.0 + std::exp(-g)) : std::exp(g) / (1.0 + std::exp(g));
}

// log(1 + e^g) without overflow
double softplus(double g) { return g > 0.0 ? g + std::log1p(std::exp(-g)) : std::log1p(std::exp(g)); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "car") return Variant::car;
  if (name == "renege") return Variant::renege;
  if (name == "renege-sk" || name == "renege_sk") return Variant::renege_sk;
  throw ValidationError("unknown model '" + name + "' (expected car, renege or renege-sk)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::car: return "car";
    case Variant::renege: return "renege";
    case Variant::renege_sk: return "renege-sk";
  }
  return "?";
}

double poisson_log_pmf(double y, double psi) { return y * psi - std::exp(psi) - std::lgamma(y + 1.0); }

void Dataset::validate(int n_regions) const {
  if (y.size() != n_regions || expected.size() != n_regions || x.rows() != n_regions)
    throw ValidationError("dataset has " + std::to_string(y.size()) + " rows but the graph has " +
                          std::to_string(n_regions) + " regions");
  for (int i = 0; i < n_regions; ++i) {
    if (!(y(i) >= 0.0) || y(i) != std::floor(y(i)) || !std::isfinite(y(i)))
      throw ValidationError("count y[" + std::to_string(i) + "] must be a nonnegative integer");
    if (!(expected(i) > 0.0) || !std::isfinite(expected(i)))
      throw ValidationError("expected[" + std::to_string(i) + "] must be positive");
  }
  if (!x.allFinite()) throw ValidationError("covariates must be finite");
}

Dataset parse_dataset(const std::string& text, int n_regions) {
  const auto table = csv::parse(text);
  if (table.header.size() < 3 || table.header[0] != "id" || table.header[1] != "y" ||
      table.header[2] != "expected")
    throw ValidationError("data header must start with `id,y,expected`");
  if (static_cast<int>(table.rows.size()) != n_regions)
    throw ValidationError("data has " + std::to_string(table.rows.size()) + " rows, graph has " +
                          std::to_string(n_regions) + " regions");
  const int k = static_cast<int>(table.header.size()) - 3;
  Dataset d;
  d.y = Eigen::VectorXd::Constant(n_regions, std::nan(""));
  d.expected = Eigen::VectorXd::Constant(n_regions, std::nan(""));
  d.x.resize(n_regions, k);
  std::vector<bool> seen(n_regions, false);
  for (const auto& row : table.rows) {
    const auto id = csv::parse_int(row[0]);
    if (id < 0 || id >= n_regions) throw ValidationError("region id " + row[0] + " out of range");
    if (seen[id]) throw ValidationError("duplicate region id " + row[0]);
    seen[id] = true;
    const auto count = csv::parse_int(row[1]);
    if (count < 0) throw ValidationError("negative count for region " + row[0]);
    d.y(id) = static_cast<double>(count);
    d.expected(id) = csv::parse_double(row[2]);
    for (int j = 0; j < k; ++j) d.x(id, j) = csv::parse_double(row[3 + j]);
  }
  d.validate(n_regions);
  return d;
}

Dataset load_dataset(const std::filesystem::path& path, int n_regions) {
  return parse_dataset(csv::read_file(path), n_regions);
}

std::string format_dataset(const Dataset& d) {
  std::string out = "id,y,expected";
  for (int j = 0; j < d.k(); ++j) out += ",x" + std::to_string(j + 1);
  out += "\n";
  for (int i = 0; i < d.n(); ++i) {
    out += std::to_string(i) + "," + csv::format_double(d.y(i)) + "," + csv::format_double(d.expected(i));
    for (int j = 0; j < d.k(); ++j) out += "," + csv::format_double(d.x(i, j));
    out += "\n";
  }
  return out;
}

void ModelSpec::validate() const {
  if (!(a_tau > 0.0) || !(b_tau > 0.0)) throw ValidationError("a_tau and b_tau must be positive");
  if (!(alpha_var > 0.0) || !(beta_sd > 0.0)) throw ValidationError("alpha_var and beta_sd must be positive");
  if (lowrank && *lowrank < 1) throw ValidationError("low-rank dimension must be >= 1");
}

std::vector<std::string> ParamLayout::names() const {
  std::vector<std::string> out(dim);
  out[alpha] = "alpha";
  for (int j = 0; j < beta_len; ++j) out[beta + j] = "beta." + std::to_string(j + 1);
  out[dependence] = "logit_dependence";
  out[log_scale] = "log_scale";
  if (log_sigma_eta >= 0) out[log_sigma_eta] = "log_sigma_eta";
  if (log_u >= 0) out[log_u] = "log_u";
  for (int j = 0; j < latent_len; ++j) out[latent + j] = "latent." + std::to_string(j + 1);
  for (int j = 0; j < skew_len; ++j) out[skew + j] = "skew." + std::to_string(j + 1);
  return out;
}

PoissonModel::PoissonModel(const SpatialStructure& s, Dataset data, ModelSpec spec)
    : s_(&s), data_(std::move(data)), spec_(spec) {
  spec_.validate();
  data_.validate(s.n());
  const bool car = spec_.variant == Variant::car;
  if (car && !s.node) throw ValidationError("CAR model needs every region to have a neighbour");
  kernel_ = car ? &*s.node : &s.line;

  dep_lo_ = std::max(0.0, kernel_->spectral.lower);
  dep_hi_ = std::min(1.0, kernel_->spectral.upper);
  if (!(dep_hi_ > dep_lo_)) throw ValidationError("empty support for the dependence parameter");

  int next = 0;
  layout_.alpha = next++;
  layout_.beta = next;
  layout_.beta_len = data_.k();
  next += data_.k();
  layout_.dependence = next++;
  layout_.log_scale = next++;
  if (spec_.variant == Variant::renege_sk) {
    layout_.log_sigma_eta = next++;
    layout_.log_u = next++;
  }
  layout_.latent = next;
  layout_.latent_len = car ? s.n() : s.p();
  next += layout_.latent_len;
  if (spec_.variant == Variant::renege_sk) {
    layout_.skew = next;
    if (spec_.lowrank) {
      basis_ = build_lowrank_basis(s.line, *spec_.lowrank);
      layout_.skew_len = *spec_.lowrank;
    } else {
      layout_.skew_len = s.p();
    }
    next += layout_.skew_len;
  }
  layout_.dim = next;

  log_expected_ = data_.expected.array().log();
  log_y_factorial_.resize(data_.n());
  for (int i = 0; i < data_.n(); ++i) log_y_factorial_(i) = std::lgamma(data_.y(i) + 1.0);
}

Eigen::VectorXd PoissonModel::edge_effects(const Eigen::VectorXd& x) const {
  if (spec_.variant == Variant::car) return {};
  Eigen::VectorXd rho = x.segment(layout_.latent, layout_.latent_len);
  if (spec_.variant == Variant::renege_sk) {
    const double sigma_eta = std::exp(x(layout_.log_sigma_eta));
    const double u = std::exp(x(layout_.log_u));
    const auto coef = x.segment(layout_.skew, layout_.skew_len);
    const Eigen::VectorXd eta = basis_ ? Eigen::VectorXd(sigma_eta * (*basis_ * coef)) : Eigen::VectorXd(sigma_eta * coef);
    rho += eta * (u - kSkewCentering);
  }
  return rho;
}

Eigen::VectorXd PoissonModel::theta_of(const Eigen::VectorXd& x) const {
  if (spec_.variant == Variant::car) return x.segment(layout_.latent, layout_.latent_len);
  return s_->incidence * edge_effects(x);
}

Eigen::VectorXd PoissonModel::linear_predictor(const Eigen::VectorXd& x) const {
  if (x.size() != layout_.dim) throw ValidationError("parameter vector has wrong dimension");
  Eigen::VectorXd psi = log_expected_ + theta_of(x);
  psi.array() += x(layout_.alpha);
  if (layout_.beta_len > 0) psi.noalias() += data_.x * x.segment(layout_.beta, layout_.beta_len);
  return psi;
}

Eigen::VectorXd PoissonModel::pointwise_loglik(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd psi = linear_predictor(x);
  Eigen::VectorXd out(psi.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i)
    out(i) = data_.y(i) * psi(i) - std::exp(psi(i)) - log_y_factorial_(i);
  return out;
}

double PoissonModel::log_posterior(const Eigen::VectorXd& x) const { return evaluate(x, nullptr, nullptr); }

double PoissonModel::log_posterior_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  return evaluate(x, &grad, nullptr);
}

LogPosteriorTerms PoissonModel::terms(const Eigen::VectorXd& x) const {
  LogPosteriorTerms t;
  evaluate(x, nullptr, &t);
  return t;
}

double PoissonModel::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, LogPosteriorTerms* out) const {
  const auto& L = layout_;
  if (x.size() != L.dim) throw ValidationError("parameter vector has wrong dimension");
  const bool car = spec_.variant == Variant::car;
  const bool skew = spec_.variant == Variant::renege_sk;
  LogPosteriorTerms t;

  // transforms
  const double g = x(L.dependence);
  const double sg = sigmoid(g);
  const double sg_neg = sigmoid(-g);
  const double width = dep_hi_ - dep_lo_;
  const double dep = dep_lo_ + width * sg;
  const double log_scale = x(L.log_scale);
  const double scale2 = std::exp(2.0 * log_scale);
  const auto latent = x.segment(L.latent, L.latent_len);

  double sigma_eta = 0.0, u = 0.0, delta = 0.0;
  Eigen::VectorXd direction, eta;  // eta = sigma_eta * direction
  if (skew) {
    sigma_eta = std::exp(x(L.log_sigma_eta));
    u = std::exp(x(L.log_u));
    delta = u - kSkewCentering;
    const auto coef = x.segment(L.skew, L.skew_len);
    direction = basis_ ? Eigen::VectorXd(*basis_ * coef) : Eigen::VectorXd(coef);
    eta = sigma_eta * direction;
  }

  // likelihood
  Eigen::VectorXd theta;
  if (car) {
    theta = latent;
  } else if (skew) {
    theta = s_->incidence * (latent + eta * delta);
  } else {
    theta = s_->incidence * latent;
  }
  Eigen::VectorXd psi = log_expected_ + theta;
  psi.array() += x(L.alpha);
  if (L.beta_len > 0) psi.noalias() += data_.x * x.segment(L.beta, L.beta_len);
  const Eigen::ArrayXd mu = psi.array().exp();
  t.likelihood = (data_.y.array() * psi.array() - mu - log_y_factorial_.array()).sum();

  // latent Gaussian prior: N(0, scale^2 (D - dep W)^{-1})
  const Eigen::VectorXd q_latent = kernel_->apply(dep, latent);
  const double quad = latent.dot(q_latent);
  const double m = static_cast<double>(L.latent_len);
  t.latent_prior = 0.5 * kernel_->log_det(dep) - m * log_scale - 0.5 * quad / scale2 - 0.5 * m * kLogTwoPi;

  // hyperpriors with log-Jacobians
  const double alpha = x(L.alpha);
  t.hyper_prior += -0.5 * std::log(2.0 * std::numbers::pi * spec_.alpha_var) - 0.5 * alpha * alpha / spec_.alpha_var;
  for (int j = 0; j < L.beta_len; ++j) {
    const double b = x(L.beta + j);
    t.hyper_prior += -0.5 * kLogTwoPi - std::log(spec_.beta_sd) - 0.5 * b * b / (spec_.beta_sd * spec_.beta_sd);
  }
  // dependence: uniform on (lo, hi), logit transform
  t.hyper_prior += -std::log(width) + std::log(width) - softplus(-g) - softplus(g);
  // precision scale^{-2} ~ Gamma(a, b) (shape/rate); Jacobian of log scale -> precision is 2 scale^{-2}
  const double precision = std::exp(-2.0 * log_scale);
  t.hyper_prior += spec_.a_tau * std::log(spec_.b_tau) - std::lgamma(spec_.a_tau) +
                   (spec_.a_tau - 1.0) * std::log(precision) - spec_.b_tau * precision + std::numbers::ln2 +
                   std::log(precision);

  if (skew) {
    const auto coef = x.segment(L.skew, L.skew_len);
    t.skew_prior += kLogHalfNormalNorm - 0.5 * u * u + x(L.log_u);
    t.skew_prior += kLogHalfNormalNorm - 0.5 * sigma_eta * sigma_eta + x(L.log_sigma_eta);
    t.skew_prior += -0.5 * static_cast<double>(L.skew_len) * kLogTwoPi - 0.5 * coef.squaredNorm();
  }

  if (out) *out = t;
  if (!grad) return t.total();

  Eigen::VectorXd& gr = *grad;
  gr.setZero(L.dim);
  const Eigen::VectorXd resid = data_.y - Eigen::VectorXd(mu.matrix());

  gr(L.alpha) = resid.sum() - alpha / spec_.alpha_var;
  if (L.beta_len > 0)
    gr.segment(L.beta, L.beta_len) = data_.x.transpose() * resid -
                                     x.segment(L.beta, L.beta_len) / (spec_.beta_sd * spec_.beta_sd);

  Eigen::VectorXd g_rho;
  if (car) {
    gr.segment(L.latent, L.latent_len) = resid - q_latent / scale2;
  } else {
    g_rho = s_->incidence.transpose() * resid;
    gr.segment(L.latent, L.latent_len) = g_rho - q_latent / scale2;
  }

  // d/d dep of the latent prior: 0.5 dlogdet + latent^T W latent / (2 scale^2)
  const double w_quad = latent.dot(kernel_->adjacency * latent);
  const double d_dep = 0.5 * kernel_->log_det_derivative(dep) + 0.5 * w_quad / scale2;
  gr(L.dependence) = d_dep * width * sg * sg_neg + (sg_neg - sg);

  gr(L.log_scale) = -m + quad / scale2 - 2.0 * spec_.a_tau + 2.0 * spec_.b_tau * precision;

  if (skew) {
    const Eigen::VectorXd g_eta = delta * g_rho;
    const double g_u = eta.dot(g_rho);
    gr(L.log_u) = (g_u - u) * u + 1.0;
    const double g_sigma_eta = direction.dot(g_eta);
    gr(L.log_sigma_eta) = (g_sigma_eta - sigma_eta) * sigma_eta + 1.0;
    const auto coef = x.segment(L.skew, L.skew_len);
    if (basis_)
      gr.segment(L.skew, L.skew_len) = sigma_eta * (basis_->transpose() * g_eta) - coef;
    else
      gr.segment(L.skew, L.skew_len) = sigma_eta * g_eta - coef;
  }
  return t.total();
}

Constrained PoissonModel::constrain(const Eigen::VectorXd& x) const {
  const auto& L = layout_;
  if (x.size() != L.dim) throw ValidationError("parameter vector has wrong dimension");
  Constrained c;
  c.alpha = x(L.alpha);
  c.beta = x.segment(L.beta, L.beta_len);
  c.dependence = dep_lo_ + (dep_hi_ - dep_lo_) * sigmoid(x(L.dependence));
  c.scale = std::exp(x(L.log_scale));
  if (L.log_sigma_eta >= 0) c.sigma_eta = std::exp(x(L.log_sigma_eta));
  if (L.log_u >= 0) c.u = std::exp(x(L.log_u));
  c.latent = x.segment(L.latent, L.latent_len);
  if (L.skew >= 0) c.skew = x.segment(L.skew, L.skew_len);
  return c;
}

Eigen::VectorXd PoissonModel::unconstrain(const Constrained& c) const {
  const auto& L = layout_;
  if (c.beta.size() != L.beta_len || c.latent.size() != L.latent_len ||
      (L.skew >= 0 && c.skew.size() != L.skew_len))
    throw ValidationError("constrained parameter blocks have wrong sizes");
  if (!(c.dependence > dep_lo_ && c.dependence < dep_hi_))
    throw ValidationError("dependence parameter outside its prior support");
  if (!(c.scale > 0.0)) throw ValidationError("scale must be positive");
  Eigen::VectorXd x(L.dim);
  x(L.alpha) = c.alpha;
  x.segment(L.beta, L.beta_len) = c.beta;
  x(L.dependence) = logit((c.dependence - dep_lo_) / (dep_hi_ - dep_lo_));
  x(L.log_scale) = std::log(c.scale);
  if (L.log_sigma_eta >= 0) {
    if (!(c.sigma_eta > 0.0) || !(c.u > 0.0)) throw ValidationError("sigma_eta and u must be positive");
    x(L.log_sigma_eta) = std::log(c.sigma_eta);
    x(L.log_u) = std::log(c.u);
  }
  x.segment(L.latent, L.latent_len) = c.latent;
  if (L.skew >= 0) x.segment(L.skew, L.skew_len) = c.skew;
  return x;
}

std::vector<std::string> PoissonModel::constrained_names() const {
  const auto& L = layout_;
  std::vector<std::string> names{"alpha"};
  for (int j = 0; j < L.beta_len; ++j) names.push_back("beta." + std::to_string(j + 1));
  names.emplace_back("gamma");
  names.emplace_back("sigma_theta");
  if (spec_.variant == Variant::renege_sk) {
    names.emplace_back("sigma_eta");
    names.emplace_back("u");
  }
  const std::string latent = spec_.variant == Variant::car ? "theta." : "eps.";
  for (int j = 0; j < L.latent_len; ++j) names.push_back(latent + std::to_string(j + 1));
  const std::string skew = basis_ ? "w." : "eta_raw.";
  for (int j = 0; j < L.skew_len; ++j) names.push_back(skew + std::to_string(j + 1));
  return names;
}

Eigen::VectorXd PoissonModel::constrained_row(const Eigen::VectorXd& x) const {
  const auto c = constrain(x);
  Eigen::VectorXd row(layout_.dim);
  int k = 0;
  row(k++) = c.alpha;
  for (Eigen::Index j = 0; j < c.beta.size(); ++j) row(k++) = c.beta(j);
  row(k++) = c.dependence;
  row(k++) = c.scale;
  if (spec_.variant == Variant::renege_sk) {
    row(k++) = c.sigma_eta;
    row(k++) = c.u;
  }
  row.segment(k, c.latent.size()) = c.latent;
  k += static_cast<int>(c.latent.size());
  if (c.skew.size()) row.segment(k, c.skew.size()) = c.skew;
  return row;
}

Eigen::VectorXd PoissonModel::initial_point(std::mt19937_64& engine) const {
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout_.dim);
  x(layout_.alpha) = unif(engine);
  for (int j = 0; j < layout_.beta_len; ++j) x(layout_.beta + j) = unif(engine);
  x(layout_.dependence) = unif(engine);
  x(layout_.log_scale) = unif(engine);
  if (layout_.log_sigma_eta >= 0) x(layout_.log_sigma_eta) = unif(engine);
  if (layout_.log_u >= 0) x(layout_.log_u) = unif(engine);
  return x;
}

}  // namespace edgefield
