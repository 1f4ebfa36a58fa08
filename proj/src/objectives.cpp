#include "ampe/objectives.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace ampe {

std::string objective_name(Objective o) {
  return o == Objective::ReverseKl ? "reverse_kl" : "forward_kl";
}

Objective objective_from_name(const std::string& s) {
  if (s == "reverse_kl") return Objective::ReverseKl;
  if (s == "forward_kl") return Objective::ForwardKl;
  throw ValidationError("unknown objective: " + s);
}

void TrainConfig::validate() const {
  require(iterations >= 0, "train.iterations must be >= 0");
  require(warmup_iters >= 0 && warmup_iters <= iterations,
          "train.warmup_iters must be in [0, iterations]");
  require(mc_samples >= 1, "train.mc_samples must be >= 1");
  require(lr > 0.0, "train.lr must be > 0");
  require(checkpoint_interval >= 0, "train.checkpoint_interval must be >= 0");
}

double warmup_beta(long iter, long warmup_iters) {
  if (warmup_iters <= 0) return 1.0;
  const double b = static_cast<double>(iter) / static_cast<double>(warmup_iters);
  return b < 1.0 ? b : 1.0;
}

namespace {

// Work is split into a fixed number of chunks regardless of the thread
// count; chunk results are reduced in chunk order, so the emitted numbers do
// not depend on the machine's parallelism.
constexpr int kChunks = 8;

struct ChunkResult {
  double loss_sum = 0.0;
  Grads grads;
};

template <typename PerDataset>
double parallel_batch_loss(const AmortizedEstimator& est, int batch_size,
                           const PerDataset& per_dataset, Grads* out_grads) {
  const int chunks = std::min(kChunks, batch_size);
  std::vector<ChunkResult> results(chunks);
  const bool want_grads = out_grads != nullptr;

  auto run_chunk = [&](int c) {
    ChunkResult& res = results[c];
    if (want_grads) res.grads = est.params().zero_grads();
    const int lo = static_cast<int>(static_cast<long>(batch_size) * c / chunks);
    const int hi = static_cast<int>(static_cast<long>(batch_size) * (c + 1) / chunks);
    for (int i = lo; i < hi; ++i) res.loss_sum += per_dataset(i, want_grads ? &res.grads : nullptr);
  };

  unsigned hw = std::thread::hardware_concurrency();
  const int workers = std::max(1, std::min<int>(chunks, hw == 0 ? 1 : static_cast<int>(hw)));
  if (workers == 1) {
    for (int c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  double loss = 0.0;
  for (int c = 0; c < chunks; ++c) loss += results[c].loss_sum;
  loss /= batch_size;
  if (out_grads) {
    out_grads->set_zero();
    for (int c = 0; c < chunks; ++c)
      out_grads->add_scaled(results[c].grads, 1.0 / batch_size);
  }
  return loss;
}

}  // namespace

double reverse_kl_loss(const AmortizedEstimator& est, const DatasetBatch& batch,
                       double beta, int M, Rng rng, Grads* out_grads) {
  require(beta >= 0.0 && beta <= 1.0, "reverse_kl_loss: beta must be in [0, 1]");
  require(M >= 1, "reverse_kl_loss: M must be >= 1");
  const ModelSpec& spec = est.spec();
  const int B = static_cast<int>(batch.datasets.size());
  require(B >= 1, "reverse_kl_loss: empty batch");

  auto per_dataset = [&](int i, Grads* grads) {
    const Dataset& data = batch.datasets[i];
    Rng slot_rng = rng.fork(static_cast<uint64_t>(i));
    Tape tape;
    BoundParams bp(tape, est.params());
    Var summary = est.encode_t(tape, bp, data);
    HeadSample hs = est.sample_logq_t(tape, bp, summary, M, slot_rng);
    Var lp = log_prior_t(tape, spec, hs.thetas);
    Var ll = log_likelihood_t(tape, spec, hs.thetas, data);
    Var kl_term = tape.scal_mul(tape.sub(hs.log_q, lp), beta);
    Var per_sample = tape.sub(kl_term, ll);
    Var loss = tape.scal_mul(tape.sum_all(per_sample), 1.0 / M);
    if (grads) {
      tape.backward(loss);
      bp.accumulate_grads(tape, *grads);
    }
    return tape.scalar(loss);
  };

  return parallel_batch_loss(est, B, per_dataset, out_grads);
}

double forward_kl_loss(const AmortizedEstimator& est, const DatasetBatch& batch,
                       Grads* out_grads) {
  require(batch.has_thetas(),
          "forward_kl requires generating parameters: the batch source must be "
          "the assumed probabilistic model");
  const int B = static_cast<int>(batch.datasets.size());
  require(static_cast<int>(batch.thetas.size()) == B,
          "forward_kl_loss: theta list misaligned");

  auto per_dataset = [&](int i, Grads* grads) {
    const Dataset& data = batch.datasets[i];
    Tape tape;
    BoundParams bp(tape, est.params());
    Var summary = est.encode_t(tape, bp, data);
    Mat theta_row = batch.thetas[i].values.transpose();
    Var lq = est.logq_t(tape, bp, summary, theta_row);
    Var loss = tape.neg(tape.sum_all(lq));
    if (grads) {
      tape.backward(loss);
      bp.accumulate_grads(tape, *grads);
    }
    return tape.scalar(loss);
  };

  return parallel_batch_loss(est, B, per_dataset, out_grads);
}

double reverse_kl_value(const PosteriorModel& q, const ModelSpec& spec,
                        const DatasetBatch& batch, double beta, int M, Rng rng) {
  require(q.has_logq(), "reverse_kl_value requires a density-evaluable model");
  const int B = static_cast<int>(batch.datasets.size());
  double acc = 0.0;
  for (int i = 0; i < B; ++i) {
    const Dataset& data = batch.datasets[i];
    Rng slot_rng = rng.fork(static_cast<uint64_t>(i));
    Mat thetas = q.sample(data, M, slot_rng);
    Vec lq = q.logq(data, thetas);
    Vec lp = log_prior_rows(spec, thetas);
    Vec ll = log_likelihood_rows(spec, thetas, data);
    acc += (beta * (lq - lp) - ll).mean();
  }
  return acc / B;
}

double forward_kl_value(const PosteriorModel& q, const DatasetBatch& batch) {
  require(batch.has_thetas(),
          "forward_kl requires generating parameters: the batch source must be "
          "the assumed probabilistic model");
  require(q.has_logq(), "forward_kl_value requires a density-evaluable model");
  double acc = 0.0;
  for (size_t i = 0; i < batch.datasets.size(); ++i) {
    Mat theta_row = batch.thetas[i].values.transpose();
    acc -= q.logq(batch.datasets[i], theta_row)[0];
  }
  return acc / static_cast<double>(batch.datasets.size());
}

double elbo_estimate(const PosteriorModel& q, const ModelSpec& spec,
                     const Dataset& data, int M, Rng& rng) {
  return elbo_estimate(q, spec, data, M, rng, nullptr);
}

double elbo_estimate(const PosteriorModel& q, const ModelSpec& spec,
                     const Dataset& data, int M, Rng& rng, double* standard_error) {
  require(M >= 1, "elbo_estimate: M must be >= 1");
  require(q.has_logq(), "elbo_estimate requires a density-evaluable model");
  Mat thetas = q.sample(data, M, rng);
  Vec terms = log_joint_rows(spec, thetas, data) - q.logq(data, thetas);
  const double mean = terms.mean();
  if (standard_error) {
    const double var = (terms.array() - mean).square().sum() / std::max(1, M - 1);
    *standard_error = std::sqrt(var / M);
  }
  return mean;
}

std::vector<TraceEntry> train(AmortizedEstimator& est, const GeneratorConfig& gen,
                              const TrainConfig& cfg, const TrainCallback& callback) {
  cfg.validate();
  gen.validate(est.spec());
  if (cfg.objective == Objective::ForwardKl)
    require(gen.source == Source::Model,
            "forward_kl can only train on datasets sampled from the assumed "
            "probabilistic model");

  Rng train_stream = Rng(cfg.seed).fork("train");
  Rng mc_stream = Rng(cfg.seed).fork("mc");
  std::vector<TraceEntry> trace;
  trace.reserve(cfg.iterations);
  Grads grads = est.params().zero_grads();

  for (long iter = 0; iter < cfg.iterations; ++iter) {
    DatasetBatch batch =
        generate_batch(gen, est.spec(), train_stream.fork(static_cast<uint64_t>(iter)));
    const double beta = warmup_beta(iter, cfg.warmup_iters);
    double loss;
    if (cfg.objective == Objective::ReverseKl) {
      loss = reverse_kl_loss(est, batch, beta, cfg.mc_samples,
                             mc_stream.fork(static_cast<uint64_t>(iter)), &grads);
    } else {
      loss = forward_kl_loss(est, batch, &grads);
    }
    if (!std::isfinite(loss))
      throw DivergenceError("non-finite training loss", iter);
    est.params().adam_step(grads, cfg.lr);
    TraceEntry entry{iter, cfg.objective == Objective::ReverseKl ? beta : 1.0, loss};
    trace.push_back(entry);
    if (callback) callback(entry, est.params());
  }
  return trace;
}

}  // namespace ampe
