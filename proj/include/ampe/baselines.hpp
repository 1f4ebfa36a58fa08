#pragma once

#include <vector>

#include "ampe/estimator.hpp"
#include "ampe/model.hpp"

namespace ampe {

// Explicit mean/covariance Gaussian used by the analytic oracles.
struct GaussianDist {
  Vec mean;
  Mat cov;

  int dim() const { return static_cast<int>(mean.size()); }
  double logpdf(const Vec& x) const;
  Vec logpdf_rows(const Mat& xs) const;
  Mat sample(int M, Rng& rng) const;
};

// Conjugate posterior over the Gaussian mean: active dimensions get
// N(sum x / (n+1), 1/(n+1)); masked dimensions stay at the prior.
GaussianDist analytic_posterior_gm(const ModelSpec& spec, const Dataset& data);

// Bayesian linear regression posterior over (w, b); masked weight
// dimensions stay at the prior.
GaussianDist analytic_posterior_lr(const ModelSpec& spec, const Dataset& data);

// Log evidence via the conjugate identity
//   log p(D) = log p(D | t0) + log p(t0) - log p(t0 | D)
// evaluated at t0 = 0; exact for the conjugate families.
double log_evidence_gm(const ModelSpec& spec, const Dataset& data);
double log_evidence_lr(const ModelSpec& spec, const Dataset& data);

enum class MapInit { PriorSample, Xavier, Given };

struct MapResult {
  Vec theta;
  // (iteration, log joint) pairs recorded every iteration.
  std::vector<std::pair<long, double>> trajectory;
};

// Adam ascent on the log joint from the chosen initialization. The optional
// callback sees (iteration, current theta, its log joint) before each step.
using MapCallback = std::function<void(long, const Vec&, double)>;
MapResult map_optimize(const ModelSpec& spec, const Dataset& data, MapInit init,
                       const Vec* given, double lr, long iters, Rng& rng,
                       const MapCallback& per_iter = nullptr);

// Best learning rate by mean final log joint across datasets; ties break
// toward the smaller rate. Every rate sees identical per-dataset inits.
double lr_grid_search(const ModelSpec& spec, const std::vector<Dataset>& datasets,
                      const std::vector<double>& grid, long iters, Rng& rng);

struct McmcConfig {
  double step_size = 1e-3;
  long total_steps = 21000;
  long burn_in = 1000;
  long thin_interval = 10;
  int chains = 4;

  void validate() const;
  long kept_per_chain() const { return (total_steps - burn_in) / thin_interval; }
};

// Unadjusted Langevin dynamics on the log joint, initialized at a prior
// sample per chain; returns the pooled kept samples (chain-major rows).
Mat langevin_sample(const ModelSpec& spec, const Dataset& data,
                    const McmcConfig& cfg, Rng& rng);

// Xavier-style init over the flat theta, applied per layout entry.
Vec xavier_theta(const ModelSpec& spec, Rng& rng);

class MapPosterior : public PosteriorModel {
 public:
  MapPosterior(const ModelSpec& spec, double lr, long iters)
      : spec_(spec), lr_(lr), iters_(iters), dim_(theta_dim(spec)) {}
  int dim() const override { return dim_; }
  // M independently initialized optimization runs.
  Mat sample(const Dataset& data, int M, Rng& rng) const override;

 private:
  ModelSpec spec_;
  double lr_;
  long iters_;
  int dim_;
};

class LangevinPosterior : public PosteriorModel {
 public:
  LangevinPosterior(const ModelSpec& spec, McmcConfig cfg)
      : spec_(spec), cfg_(cfg), dim_(theta_dim(spec)) {}
  int dim() const override { return dim_; }
  // Pooled chains, deterministically subsampled down to M rows.
  Mat sample(const Dataset& data, int M, Rng& rng) const override;

 private:
  ModelSpec spec_;
  McmcConfig cfg_;
  int dim_;
};

}  // namespace ampe
