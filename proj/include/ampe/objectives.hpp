#pragma once

#include <vector>

#include "ampe/datagen.hpp"
#include "ampe/estimator.hpp"

namespace ampe {

enum class Objective { ReverseKl, ForwardKl };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& s);

struct TrainConfig {
  Objective objective = Objective::ReverseKl;
  long iterations = 0;
  long warmup_iters = 0;
  int mc_samples = 1;
  double lr = 1e-4;
  uint64_t seed = 0;
  long checkpoint_interval = 0;  // 0 = final checkpoint only

  void validate() const;
};

// Linear KL warmup; beta = min(1, iter / warmup_iters).
double warmup_beta(long iter, long warmup_iters);

// Mean over datasets and M reparameterized samples of
//   beta * (log q - log prior) - log likelihood.
// At beta = 1 this is the negated ELBO estimator. Fills `out_grads` (scaled
// for the mean) when non-null. Dataset slot i consumes rng.fork(i).
double reverse_kl_loss(const AmortizedEstimator& est, const DatasetBatch& batch,
                       double beta, int M, Rng rng, Grads* out_grads);

// Mean over datasets of -log q(theta* | D); requires generating thetas,
// which only Source::Model batches carry.
double forward_kl_loss(const AmortizedEstimator& est, const DatasetBatch& batch,
                       Grads* out_grads);

// Loss values on an arbitrary posterior model (no gradients); used by the
// oracle-forcing tests and shares the estimator path's definition.
double reverse_kl_value(const PosteriorModel& q, const ModelSpec& spec,
                        const DatasetBatch& batch, double beta, int M, Rng rng);
double forward_kl_value(const PosteriorModel& q, const DatasetBatch& batch);

// Monte Carlo ELBO: mean over M samples of log p(D, theta) - log q(theta|D).
double elbo_estimate(const PosteriorModel& q, const ModelSpec& spec,
                     const Dataset& data, int M, Rng& rng);
double elbo_estimate(const PosteriorModel& q, const ModelSpec& spec,
                     const Dataset& data, int M, Rng& rng, double* standard_error);

struct TraceEntry {
  long iter;
  double beta;
  double loss;
};

using TrainCallback = std::function<void(const TraceEntry&, const ParamStore&)>;

// Streaming training loop: a fresh generated batch every iteration, the
// configured loss with KL warmup, one Adam step. Throws DivergenceError on a
// non-finite loss. Batches derive from fork("train").fork(iter) and sampling
// noise from fork("mc").fork(iter) of the config seed.
std::vector<TraceEntry> train(AmortizedEstimator& est, const GeneratorConfig& gen,
                              const TrainConfig& cfg,
                              const TrainCallback& callback = nullptr);

}  // namespace ampe
