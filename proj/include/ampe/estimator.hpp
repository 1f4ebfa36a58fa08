#pragma once

#include <functional>
#include <memory>

#include "ampe/encoders.hpp"
#include "ampe/heads.hpp"

namespace ampe {

// Anything that can produce posterior samples for a dataset; the amortized
// networks, the analytic posteriors and the iterative baselines all fit.
class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual int dim() const = 0;
  virtual Mat sample(const Dataset& data, int M, Rng& rng) const = 0;
  virtual bool has_logq() const { return false; }
  virtual Vec logq(const Dataset& data, const Mat& thetas) const {
    (void)data;
    (void)thetas;
    throw ValidationError("this posterior model has no tractable density");
  }
};

// Summary network plus posterior head over one ModelSpec's parameter space.
class AmortizedEstimator {
 public:
  AmortizedEstimator(ModelSpec spec, EncoderConfig enc, HeadConfig head,
                     uint64_t init_seed);
  AmortizedEstimator(ModelSpec spec, EncoderConfig enc, HeadConfig head,
                     ParamStore params);

  const ModelSpec& spec() const { return spec_; }
  const EncoderConfig& encoder() const { return enc_; }
  const HeadConfig& head() const { return head_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int theta_dimension() const { return theta_dim_; }

  // Tape builders operating on an externally owned tape.
  Var encode_t(Tape& tape, const BoundParams& bp, const Dataset& data) const;
  HeadSample sample_logq_t(Tape& tape, const BoundParams& bp, Var summary, int M,
                           Rng& rng) const;
  Var logq_t(Tape& tape, const BoundParams& bp, Var summary, const Mat& thetas) const;

  // Convenience evaluation paths (tape under the hood, no backward pass).
  Vec summary(const Dataset& data) const;
  PosteriorSampleBatch sample_logq(const Dataset& data, int M, Rng& rng) const;
  Vec logq(const Dataset& data, const Mat& thetas) const;

  // The head's explicit (mu, diag sigma^2) for one dataset; diagonal
  // Gaussian heads only.
  struct MeanDiagVar {
    Vec mean;
    Vec var;
  };
  MeanDiagVar gaussian_posterior(const Dataset& data) const;

 private:
  ModelSpec spec_;
  EncoderConfig enc_;
  HeadConfig head_;
  int theta_dim_;
  ParamStore params_;
};

// PosteriorModel adapters.

class EstimatorPosterior : public PosteriorModel {
 public:
  explicit EstimatorPosterior(const AmortizedEstimator& est) : est_(&est) {}
  int dim() const override { return est_->theta_dimension(); }
  Mat sample(const Dataset& data, int M, Rng& rng) const override {
    return est_->sample_logq(data, M, rng).thetas;
  }
  bool has_logq() const override { return true; }
  Vec logq(const Dataset& data, const Mat& thetas) const override {
    return est_->logq(data, thetas);
  }

 private:
  const AmortizedEstimator* est_;
};

class PriorPosterior : public PosteriorModel {
 public:
  explicit PriorPosterior(const ModelSpec& spec)
      : spec_(spec), dim_(theta_dim(spec)) {}
  int dim() const override { return dim_; }
  Mat sample(const Dataset&, int M, Rng& rng) const override {
    return rng.normal_mat(M, dim_);
  }
  bool has_logq() const override { return true; }
  Vec logq(const Dataset&, const Mat& thetas) const override {
    return log_prior_rows(spec_, thetas);
  }

 private:
  ModelSpec spec_;
  int dim_;
};

// Wraps a per-dataset closed-form Gaussian (or any callback-provided
// distribution with mean/covariance).
class CallbackGaussianPosterior : public PosteriorModel {
 public:
  struct MeanCov {
    Vec mean;
    Mat cov;
  };
  using Fn = std::function<MeanCov(const Dataset&)>;
  CallbackGaussianPosterior(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  int dim() const override { return dim_; }
  Mat sample(const Dataset& data, int M, Rng& rng) const override;
  bool has_logq() const override { return true; }
  Vec logq(const Dataset& data, const Mat& thetas) const override;

 private:
  int dim_;
  Fn fn_;
};

}  // namespace ampe
