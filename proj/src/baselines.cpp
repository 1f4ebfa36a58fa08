#include "ampe/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace ampe {

double GaussianDist::logpdf(const Vec& x) const {
  return logpdf_rows(x.transpose())[0];
}

Vec GaussianDist::logpdf_rows(const Mat& xs) const {
  Eigen::LLT<Mat> llt(cov);
  require(llt.info() == Eigen::Success, "GaussianDist: covariance not SPD");
  Mat l = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < dim(); ++i) log_det += 2.0 * std::log(l(i, i));
  Vec out(xs.rows());
  for (Eigen::Index m = 0; m < xs.rows(); ++m) {
    Vec w = llt.matrixL().solve(xs.row(m).transpose() - mean);
    out[m] = -0.5 * (dim() * kLog2Pi + log_det + w.squaredNorm());
  }
  return out;
}

Mat GaussianDist::sample(int M, Rng& rng) const {
  Eigen::LLT<Mat> llt(cov);
  require(llt.info() == Eigen::Success, "GaussianDist: covariance not SPD");
  Mat eps = rng.normal_mat(M, dim());
  Mat out = eps * llt.matrixL().transpose();
  out.rowwise() += mean.transpose();
  return out;
}

GaussianDist analytic_posterior_gm(const ModelSpec& spec, const Dataset& data) {
  require(spec.family == Family::GM, "analytic_posterior_gm requires the GM family");
  validate_dataset(spec, data);
  const int d = spec.d_max;
  GaussianDist out;
  out.mean = Vec::Zero(d);
  out.cov = Mat::Identity(d, d);
  const double n = static_cast<double>(data.n_active);
  for (int j = 0; j < d; ++j) {
    if (!data.feat_mask[j]) continue;  // masked dims keep the prior
    double s = 0.0;
    for (int i = 0; i < data.n_max(); ++i)
      if (data.obs_mask[i]) s += data.x(i, j);
    out.mean[j] = s / (n + 1.0);
    out.cov(j, j) = 1.0 / (n + 1.0);
  }
  return out;
}

GaussianDist analytic_posterior_lr(const ModelSpec& spec, const Dataset& data) {
  require(spec.family == Family::LR, "analytic_posterior_lr requires the LR family");
  validate_dataset(spec, data);
  const int k = spec.d_max + 1;
  CompactData cd = compact(spec, data);
  const int n = static_cast<int>(cd.rows.size());
  const int da = static_cast<int>(cd.cols.size());

  // Design matrix over active rows/dims plus the intercept column.
  Mat xt(n, da + 1);
  xt.leftCols(da) = cd.x;
  xt.col(da).setOnes();
  Mat a = Mat::Identity(da + 1, da + 1) + xt.transpose() * xt / spec.sigma2;
  Eigen::LLT<Mat> llt(a);
  require(llt.info() == Eigen::Success, "analytic_posterior_lr: precision not SPD");
  Vec rhs = xt.transpose() * cd.y / spec.sigma2;
  Vec mean_act = llt.solve(rhs);
  Mat cov_act = llt.solve(Mat::Identity(da + 1, da + 1));

  GaussianDist out;
  out.mean = Vec::Zero(k);
  out.cov = Mat::Identity(k, k);
  // Scatter the active block back into (w, b) order; masked weights keep
  // the prior and are independent of the active block.
  std::vector<int> act(cd.cols);
  act.push_back(spec.d_max);  // intercept position in theta
  for (int i = 0; i < da + 1; ++i) {
    out.mean[act[i]] = mean_act[i];
    for (int j = 0; j < da + 1; ++j) out.cov(act[i], act[j]) = cov_act(i, j);
  }
  return out;
}

namespace {

double log_evidence_conjugate(const ModelSpec& spec, const Dataset& data,
                              const GaussianDist& posterior) {
  ThetaVector t0 = make_theta(spec, Vec::Zero(theta_dim(spec)));
  return log_likelihood(spec, t0, data) + log_prior(spec, t0) -
         posterior.logpdf(t0.values);
}

}  // namespace

double log_evidence_gm(const ModelSpec& spec, const Dataset& data) {
  return log_evidence_conjugate(spec, data, analytic_posterior_gm(spec, data));
}

double log_evidence_lr(const ModelSpec& spec, const Dataset& data) {
  return log_evidence_conjugate(spec, data, analytic_posterior_lr(spec, data));
}

Vec xavier_theta(const ModelSpec& spec, Rng& rng) {
  Vec theta = Vec::Zero(theta_dim(spec));
  for (const auto& entry : theta_layout(spec)) {
    // Bias entries (single row vectors named b*) start at zero.
    if (entry.name[0] == 'b') continue;
    Mat w = xavier_init(entry.rows, entry.cols, rng);
    for (int i = 0; i < entry.rows; ++i)
      for (int j = 0; j < entry.cols; ++j)
        theta[entry.offset + i * entry.cols + j] = w(i, j);
  }
  return theta;
}

MapResult map_optimize(const ModelSpec& spec, const Dataset& data, MapInit init,
                       const Vec* given, double lr, long iters, Rng& rng,
                       const MapCallback& per_iter) {
  require(lr >= 0.0, "map_optimize: lr must be >= 0");
  const int k = theta_dim(spec);
  Vec theta;
  switch (init) {
    case MapInit::PriorSample:
      theta = rng.normal_vec(k);
      break;
    case MapInit::Xavier:
      theta = xavier_theta(spec, rng);
      break;
    case MapInit::Given:
      require(given != nullptr && given->size() == k,
              "map_optimize: init=given requires a theta of the right size");
      theta = *given;
      break;
  }

  ParamStore ps;
  ps.add("theta", theta.transpose());
  MapResult result;
  result.trajectory.reserve(iters);
  for (long it = 0; it < iters; ++it) {
    Tape tape;
    Var tv = tape.leaf(ps.value("theta"), true);
    Var lj = log_joint_t(tape, spec, tv, data);
    Var loss = tape.neg(tape.sum_all(lj));
    tape.backward(loss);
    if (per_iter) per_iter(it, ps.value("theta").row(0).transpose(), tape.scalar(lj));
    Grads grads = ps.zero_grads();
    grads.g[0] = tape.grad(tv);
    ps.adam_step(grads, lr);
    result.trajectory.emplace_back(it, tape.scalar(lj));
  }
  result.theta = ps.value("theta").row(0).transpose();
  return result;
}

double lr_grid_search(const ModelSpec& spec, const std::vector<Dataset>& datasets,
                      const std::vector<double>& grid, long iters, Rng& rng) {
  require(!grid.empty(), "lr_grid_search: empty grid");
  require(!datasets.empty(), "lr_grid_search: no datasets");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  // Fixed per-dataset inits so every rate is compared on the same runs.
  std::vector<Vec> inits;
  inits.reserve(datasets.size());
  for (size_t i = 0; i < datasets.size(); ++i) {
    Rng r = rng.fork("grid_init").fork(static_cast<uint64_t>(i));
    inits.push_back(r.normal_vec(theta_dim(spec)));
  }

  double best_lr = sorted.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (double lr : sorted) {
    double score = 0.0;
    for (size_t i = 0; i < datasets.size(); ++i) {
      Rng r = rng.fork("grid_run");
      MapResult res =
          map_optimize(spec, datasets[i], MapInit::Given, &inits[i], lr, iters, r);
      Vec final_theta = res.theta;
      score += log_joint(spec, make_theta(spec, final_theta), datasets[i]);
    }
    score /= static_cast<double>(datasets.size());
    if (score > best_score) {
      best_score = score;
      best_lr = lr;
    }
  }
  return best_lr;
}

void McmcConfig::validate() const {
  require(step_size > 0.0, "mcmc.step_size must be > 0");
  require(total_steps >= 1, "mcmc.total_steps must be >= 1");
  require(burn_in >= 0 && burn_in < total_steps,
          "mcmc.burn_in must be in [0, total_steps)");
  require(thin_interval >= 1, "mcmc.thin_interval must be >= 1");
  require(chains >= 1, "mcmc.chains must be >= 1");
}

Mat langevin_sample(const ModelSpec& spec, const Dataset& data,
                    const McmcConfig& cfg, Rng& rng) {
  cfg.validate();
  const int k = theta_dim(spec);
  const long kept = cfg.kept_per_chain();
  Mat out(cfg.chains * kept, k);
  const double eps = cfg.step_size;
  const double noise_scale = std::sqrt(eps);

  std::vector<Rng> chain_rng;
  for (int c = 0; c < cfg.chains; ++c)
    chain_rng.push_back(rng.fork("chain").fork(static_cast<uint64_t>(c)));

  Mat state(cfg.chains, k);
  for (int c = 0; c < cfg.chains; ++c)
    state.row(c) = chain_rng[c].normal_vec(k).transpose();

  long kept_count = 0;
  for (long t = 1; t <= cfg.total_steps; ++t) {
    Tape tape;
    Var tv = tape.leaf(state, true);
    Var lj = log_joint_t(tape, spec, tv, data);
    tape.backward(tape.sum_all(lj));
    const Mat& grad = tape.grad(tv);
    for (int c = 0; c < cfg.chains; ++c) {
      Vec xi = chain_rng[c].normal_vec(k);
      state.row(c) += 0.5 * eps * grad.row(c) + noise_scale * xi.transpose();
    }
    if (!state.allFinite())
      throw DivergenceError("langevin chain diverged; reduce the step size", t);
    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin_interval == 0 &&
        kept_count < kept) {
      for (int c = 0; c < cfg.chains; ++c)
        out.row(c * kept + kept_count) = state.row(c);
      ++kept_count;
    }
  }
  return out;
}

Mat MapPosterior::sample(const Dataset& data, int M, Rng& rng) const {
  Mat out(M, dim_);
  for (int m = 0; m < M; ++m) {
    Rng r = rng.fork("map").fork(static_cast<uint64_t>(m));
    out.row(m) =
        map_optimize(spec_, data, MapInit::PriorSample, nullptr, lr_, iters_, r)
            .theta.transpose();
  }
  return out;
}

Mat LangevinPosterior::sample(const Dataset& data, int M, Rng& rng) const {
  Rng run = rng.fork("langevin");
  Mat pooled = langevin_sample(spec_, data, cfg_, run);
  if (pooled.rows() <= M) return pooled;
  // Evenly spaced deterministic subsample of the pooled draws.
  Mat out(M, dim_);
  const long stride = pooled.rows() / M;
  for (int m = 0; m < M; ++m) out.row(m) = pooled.row(m * stride);
  return out;
}

}  // namespace ampe
