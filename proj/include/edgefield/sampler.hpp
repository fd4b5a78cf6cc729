#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgefield/model.hpp"
#include "edgefield/rng.hpp"

namespace edgefield {

enum class MetricKind { diag, dense };

MetricKind parse_metric(const std::string& name);  // diag | dense

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int samples = 1000;
  std::uint64_t seed = 0;
  double target_accept = 0.8;
  int max_leapfrog = 512;
  // Trajectory length in metric-scaled units; the leapfrog count is
  // integration_time / step_size, jittered uniformly by +-20%.
  double integration_time = 2.0;
  // Dense metrics capture the strong linear correlations between edge effects
  // that share a node; they cost O(dim^2) per leapfrog step.
  MetricKind metric = MetricKind::dense;
  // Sample the latent block in whitened coordinates (see make_target).
  bool noncentered = false;
  int threads = 0;  // 0: EDGEFIELD_THREADS or hardware concurrency
  std::function<void(const std::string&)> progress;

  void validate() const;
};

/// Differentiable log density over R^dim.
struct Target {
  int dim = 0;
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> log_density_gradient;
  std::function<Eigen::VectorXd(rng::Engine&)> initial_point;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // samples x dim
  Eigen::VectorXd log_density;
  Eigen::VectorXd accept_stat;
  Eigen::VectorXi divergent;  // 1 where the transition diverged
  int divergences = 0;
  double step_size = 0.0;
  Eigen::VectorXd inverse_metric;
};

// Each chain is seeded from rng::substream(seed, chain, chain_id). Chains run
// concurrently on up to `threads` workers; results do not depend on the count.
std::vector<ChainResult> run_hmc(const Target& target, const SamplerConfig& config);

int worker_count(int requested);

struct PosteriorDraws {
  int chains = 0;
  int samples = 0;
  std::vector<std::string> names;  // constrained column names
  Eigen::MatrixXd unconstrained;   // (chains*samples) x dim, row = chain*samples + iter
  Eigen::MatrixXd constrained;     // same shape, named columns
  Eigen::VectorXd log_post;
  Eigen::MatrixXd pointwise;          // (chains*samples) x n log-likelihood
  Eigen::MatrixXd linear_predictor;   // (chains*samples) x n
  Eigen::MatrixXd edge_effects;       // (chains*samples) x p, empty for CAR

  int size() const { return chains * samples; }
  int column(const std::string& name) const;
  std::vector<Eigen::VectorXd> chain_columns(int col) const;
};

struct ChainStat {
  double value = 0.0;
  bool degenerate = false;
};

struct Diagnostics {
  std::vector<std::string> names;
  std::vector<ChainStat> rhat;
  std::vector<ChainStat> ess_bulk;
  int divergence_count = 0;
  double mean_accept = 0.0;
  std::vector<double> step_sizes;

  const ChainStat& rhat_of(const std::string& name) const;
  const ChainStat& ess_of(const std::string& name) const;
};

struct FitResult {
  PosteriorDraws draws;
  Diagnostics diagnostics;
};

FitResult run_chains(const PoissonModel& model, const SamplerConfig& config);

// Chains move in coordinates where the intercept absorbs the mean of the
// latent field, the skewed edge model carries rho rather than eps and, when
// `noncentered`, the latent block is whitened by its prior. All are exact
// changes of variable; draws are reported in the model's own parameterization.
Target make_target(const PoissonModel& model, bool noncentered = false);

// Split-R-hat over chains halved in time; requires at least two chains.
ChainStat split_rhat(const std::vector<Eigen::VectorXd>& chains);

// Rank-normalized split-chain effective sample size with Geyer's initial
// monotone sequence truncation; any chain count, each of length >= 8.
ChainStat ess_bulk(const std::vector<Eigen::VectorXd>& chains);

Diagnostics diagnose(const PosteriorDraws& draws, const std::vector<ChainResult>& chains);

// CSV: chain,iter,log_post,<constrained names>
std::string format_draws(const PosteriorDraws& draws);
// JSON object with per-parameter rhat / ess and sampler summaries.
std::string format_diagnostics(const Diagnostics& d);

}  // namespace edgefield
