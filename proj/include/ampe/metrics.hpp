#pragma once

#include <string>
#include <vector>

#include "ampe/baselines.hpp"
#include "ampe/estimator.hpp"

namespace ampe {

struct MetricReport {
  std::string name;
  Vec per_dataset;
  double mean = 0.0;
  double se = 0.0;
  int posterior_samples = 0;  // S
  int test_datasets = 0;      // T
};

MetricReport make_report(const std::string& name, Vec per_dataset, int S);

// Mean over datasets and S posterior samples of the summed squared distance
// of active observations from the sampled mean (active dims only).
MetricReport metric_gm_l2(const PosteriorModel& q, const ModelSpec& spec,
                          const std::vector<Dataset>& testsets, int S, Rng& rng);

// Same, but each observation is matched to the nearest sampled cluster mean.
MetricReport metric_gmm_l2(const PosteriorModel& q, const ModelSpec& spec,
                           const std::vector<Dataset>& testsets, int S, Rng& rng);

// Sum of squared prediction errors at the predictive mode.
MetricReport metric_predictive_l2(const PosteriorModel& q, const ModelSpec& spec,
                                  const std::vector<Dataset>& testsets, int S,
                                  Rng& rng);

// Classification accuracy of the predictive mode, in percent.
MetricReport metric_accuracy(const PosteriorModel& q, const ModelSpec& spec,
                             const std::vector<Dataset>& testsets, int S, Rng& rng);

// 0.5 KL(p||q) + 0.5 KL(q||p) in closed form.
double symmetric_kl_gaussian(const GaussianDist& p, const GaussianDist& q);

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

// Monte Carlo symmetric KL between a density-evaluable posterior model and an
// analytic Gaussian, M samples per direction.
McEstimate symmetric_kl_mc(const PosteriorModel& q, const Dataset& data,
                           const GaussianDist& p, int M, Rng& rng);

// Minimum-cost assignment (rows to columns) of a square cost matrix.
std::vector<int> hungarian_assignment(const Mat& cost);

// Exact squared 2-Wasserstein distance between two equal-size sample sets:
// optimal assignment over the pairwise squared distances divided by M. The
// 1-D case pairs sorted samples, which is provably optimal. Callers must
// subsample above the hard cap of 512 (the solver is O(M^3)).
double w2_squared_empirical(const Mat& a, const Mat& b);

// Evenly spaced deterministic row subsample after a seeded shuffle.
Mat subsample_rows(const Mat& a, int M, Rng& rng);

}  // namespace ampe
