#pragma once

#include <string>

#include "ampe/params.hpp"
#include "ampe/rng.hpp"

namespace ampe {

enum class HeadKind { DiagGaussian, Flow };

std::string head_name(HeadKind k);
HeadKind head_from_name(const std::string& s);

struct GaussianHeadConfig {
  int hidden = 128;
  double log_sigma_lo = -7.0;
  double log_sigma_hi = 2.0;
};

struct FlowHeadConfig {
  int blocks = 6;
  int subnet_hidden = 128;
  double clamp = 2.0;
};

struct HeadConfig {
  HeadKind kind = HeadKind::DiagGaussian;
  GaussianHeadConfig gaussian;
  FlowHeadConfig flow;

  void validate() const;
};

struct PosteriorSampleBatch {
  Mat thetas;  // M x theta_dim
  Vec log_q;   // M
};

// theta = mu + sigma .* eps with eps ~ N(0, I); mu and sigma are 1 x k rows
// broadcast over the M drawn rows, so gradients flow back to both.
struct Reparam {
  Var theta;  // M x k
  Mat eps;    // the consumed noise
};
Reparam reparam_gaussian(Tape& tape, Var mu, Var sigma, int M, Rng& rng);

void init_head_params(ParamStore& ps, const HeadConfig& cfg, int summary_dim,
                      int theta_dim, Rng& rng);

// Diagonal Gaussian head: an MLP maps the summary to (mu, log_sigma) with
// log_sigma clamped to a fixed range.
struct GaussianMoments {
  Var mu;         // 1 x k
  Var log_sigma;  // 1 x k
};
GaussianMoments gaussian_moments(Tape& tape, const BoundParams& bp,
                                 const GaussianHeadConfig& cfg, Var summary,
                                 int theta_dim);

// Reparameterized draw theta = mu + sigma .* eps with eps ~ N(0, I); the
// returned log_q column is differentiable w.r.t. head and encoder parameters.
struct HeadSample {
  Var thetas;  // M x k
  Var log_q;   // M x 1
};
HeadSample gaussian_sample_logq(Tape& tape, const GaussianMoments& m, int M,
                                Rng& rng);
Var gaussian_logq(Tape& tape, const GaussianMoments& m, const Mat& thetas);

// Conditional coupling flow: per block actnorm, a fixed permutation and an
// affine coupling whose subnet conditions on (passive half is first
// ceil(k/2) indices after the permutation) and the dataset summary. For
// k = 1 the conditioning half is empty and the subnet sees the summary only.
struct FlowResult {
  Var out;      // M x k
  Var log_det;  // M x 1
};
FlowResult flow_forward(Tape& tape, const BoundParams& bp, const ParamStore& ps,
                        const FlowHeadConfig& cfg, Var z, Var summary);
FlowResult flow_inverse(Tape& tape, const BoundParams& bp, const ParamStore& ps,
                        const FlowHeadConfig& cfg, const Mat& thetas, Var summary);
HeadSample flow_sample_logq(Tape& tape, const BoundParams& bp, const ParamStore& ps,
                            const FlowHeadConfig& cfg, Var summary, int theta_dim,
                            int M, Rng& rng);
Var flow_logq(Tape& tape, const BoundParams& bp, const ParamStore& ps,
              const FlowHeadConfig& cfg, Var summary, const Mat& thetas);

}  // namespace ampe
