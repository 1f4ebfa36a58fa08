#include "ampe/estimator.hpp"

#include <Eigen/Cholesky>

namespace ampe {

AmortizedEstimator::AmortizedEstimator(ModelSpec spec, EncoderConfig enc,
                                       HeadConfig head, uint64_t init_seed)
    : spec_(std::move(spec)), enc_(std::move(enc)), head_(std::move(head)) {
  spec_.validate();
  enc_.validate();
  head_.validate();
  theta_dim_ = theta_dim(spec_);
  Rng rng(init_seed, Rng::fnv1a64("init"));
  init_encoder_params(params_, enc_, token_dim(spec_), rng);
  Rng head_rng = rng.fork("head");
  init_head_params(params_, head_, enc_.summary_dim, theta_dim_, head_rng);
}

AmortizedEstimator::AmortizedEstimator(ModelSpec spec, EncoderConfig enc,
                                       HeadConfig head, ParamStore params)
    : spec_(std::move(spec)),
      enc_(std::move(enc)),
      head_(std::move(head)),
      theta_dim_(theta_dim(spec_)),
      params_(std::move(params)) {}

Var AmortizedEstimator::encode_t(Tape& tape, const BoundParams& bp,
                                 const Dataset& data) const {
  return encode(tape, bp, enc_, spec_, data);
}

HeadSample AmortizedEstimator::sample_logq_t(Tape& tape, const BoundParams& bp,
                                             Var summary, int M, Rng& rng) const {
  require(M >= 1, "sample_logq: M must be >= 1");
  if (head_.kind == HeadKind::DiagGaussian) {
    GaussianMoments m = gaussian_moments(tape, bp, head_.gaussian, summary, theta_dim_);
    return gaussian_sample_logq(tape, m, M, rng);
  }
  return flow_sample_logq(tape, bp, params_, head_.flow, summary, theta_dim_, M, rng);
}

Var AmortizedEstimator::logq_t(Tape& tape, const BoundParams& bp, Var summary,
                               const Mat& thetas) const {
  require(thetas.cols() == theta_dim_, "logq: theta dimension mismatch");
  if (head_.kind == HeadKind::DiagGaussian) {
    GaussianMoments m = gaussian_moments(tape, bp, head_.gaussian, summary, theta_dim_);
    return gaussian_logq(tape, m, thetas);
  }
  return flow_logq(tape, bp, params_, head_.flow, summary, thetas);
}

Vec AmortizedEstimator::summary(const Dataset& data) const {
  Tape tape;
  BoundParams bp(tape, params_);
  Var s = encode_t(tape, bp, data);
  return tape.val(s).row(0).transpose();
}

PosteriorSampleBatch AmortizedEstimator::sample_logq(const Dataset& data, int M,
                                                     Rng& rng) const {
  Tape tape;
  BoundParams bp(tape, params_);
  Var s = encode_t(tape, bp, data);
  HeadSample hs = sample_logq_t(tape, bp, s, M, rng);
  return PosteriorSampleBatch{tape.val(hs.thetas), tape.val(hs.log_q).col(0)};
}

Vec AmortizedEstimator::logq(const Dataset& data, const Mat& thetas) const {
  Tape tape;
  BoundParams bp(tape, params_);
  Var s = encode_t(tape, bp, data);
  Var lq = logq_t(tape, bp, s, thetas);
  return tape.val(lq).col(0);
}

AmortizedEstimator::MeanDiagVar AmortizedEstimator::gaussian_posterior(
    const Dataset& data) const {
  require(head_.kind == HeadKind::DiagGaussian,
          "gaussian_posterior requires the diagonal Gaussian head");
  Tape tape;
  BoundParams bp(tape, params_);
  Var s = encode_t(tape, bp, data);
  GaussianMoments m = gaussian_moments(tape, bp, head_.gaussian, s, theta_dim_);
  MeanDiagVar out;
  out.mean = tape.val(m.mu).row(0).transpose();
  out.var = (2.0 * tape.val(m.log_sigma).row(0).transpose().array()).exp();
  return out;
}

Mat CallbackGaussianPosterior::sample(const Dataset& data, int M, Rng& rng) const {
  MeanCov mc = fn_(data);
  Eigen::LLT<Mat> llt(mc.cov);
  require(llt.info() == Eigen::Success, "posterior covariance is not SPD");
  Mat eps = rng.normal_mat(M, dim_);
  Mat out = eps * llt.matrixL().transpose();
  out.rowwise() += mc.mean.transpose();
  return out;
}

Vec CallbackGaussianPosterior::logq(const Dataset& data, const Mat& thetas) const {
  MeanCov mc = fn_(data);
  Eigen::LLT<Mat> llt(mc.cov);
  require(llt.info() == Eigen::Success, "posterior covariance is not SPD");
  Mat l = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < dim_; ++i) log_det += 2.0 * std::log(l(i, i));
  Vec out(thetas.rows());
  for (Eigen::Index m = 0; m < thetas.rows(); ++m) {
    Vec d = thetas.row(m).transpose() - mc.mean;
    Vec w = llt.matrixL().solve(d);
    out[m] = -0.5 * (dim_ * kLog2Pi + log_det + w.squaredNorm());
  }
  return out;
}

}  // namespace ampe
