#pragma once

#include <string>
#include <vector>

#include "ampe/common.hpp"
#include "ampe/rng.hpp"
#include "ampe/tape.hpp"

namespace ampe {

enum class Family { GM, GMM, LR, LC, NLR, NLC };
enum class Activation { Relu, Tanh };
enum class XDist { StdNormal, UniformPm1 };

std::string family_name(Family f);
Family family_from_name(const std::string& s);

// A probabilistic model family plus its fixed hyperparameters; defines the
// prior, the likelihood and the flat parameter layout.
struct ModelSpec {
  Family family = Family::GM;
  int d_max = 1;
  int k_clusters = 2;    // GMM
  int n_classes = 2;     // LC / NLC
  int hidden_layers = 1; // NLR / NLC
  int hidden_units = 32; // NLR / NLC
  Activation activation = Activation::Relu;
  double sigma2 = 0.25;  // LR / NLR
  double tau = 0.1;      // LC / NLC

  bool is_regression() const { return family == Family::LR || family == Family::NLR; }
  bool is_classification() const { return family == Family::LC || family == Family::NLC; }
  bool is_unsupervised() const { return family == Family::GM || family == Family::GMM; }
  bool has_mlp() const { return family == Family::NLR || family == Family::NLC; }

  void validate() const;
};

int theta_dim(const ModelSpec& spec);

struct LayoutEntry {
  std::string name;
  int offset;
  int rows, cols;
  int extent() const { return rows * cols; }
};

// Layer-major, weights before biases for the MLP families.
std::vector<LayoutEntry> theta_layout(const ModelSpec& spec);

struct ThetaVector {
  Vec values;
  std::vector<LayoutEntry> layout;
};

ThetaVector make_theta(const ModelSpec& spec, Vec values);

// Padded observation matrix with observation and feature masks. Masked
// entries are exactly zero by contract.
struct Dataset {
  Mat x;                         // n_max x d_max
  Vec y;                         // regression targets (empty otherwise)
  std::vector<int> y_class;      // classification targets (empty otherwise)
  std::vector<uint8_t> obs_mask; // n_max
  std::vector<uint8_t> feat_mask;// d_max
  int n_active = 0;
  int d_active = 0;

  int n_max() const { return static_cast<int>(x.rows()); }
  int d_max() const { return static_cast<int>(x.cols()); }
  std::vector<int> active_rows() const;
  std::vector<int> active_cols() const;
};

void validate_dataset(const ModelSpec& spec, const Dataset& data);

// Active rows/columns extracted in index order; the canonical form every
// likelihood evaluation works on.
struct CompactData {
  Mat x;                    // n_active x d_active
  Vec y;
  std::vector<int> y_class;
  std::vector<int> rows, cols;
};
CompactData compact(const ModelSpec& spec, const Dataset& data);

double log_prior(const ModelSpec& spec, const ThetaVector& theta);
double log_likelihood(const ModelSpec& spec, const ThetaVector& theta,
                      const Dataset& data);
double log_joint(const ModelSpec& spec, const ThetaVector& theta,
                 const Dataset& data);

// Row-wise evaluation for sample batches (thetas: M x theta_dim).
Vec log_prior_rows(const ModelSpec& spec, const Mat& thetas);
Vec log_likelihood_rows(const ModelSpec& spec, const Mat& thetas,
                        const Dataset& data);
Vec log_joint_rows(const ModelSpec& spec, const Mat& thetas, const Dataset& data);

ThetaVector sample_theta(const ModelSpec& spec, Rng& rng);

Dataset sample_dataset(const ModelSpec& spec, const ThetaVector& theta, int n,
                       Rng& rng, XDist x_dist = XDist::StdNormal, int n_max = 128);

// Variable-dimension variant: only the first d_active features are active;
// y is sampled through the active slice, which matches evaluating the full
// theta on zero-padded inputs.
Dataset sample_dataset_masked(const ModelSpec& spec, const ThetaVector& theta,
                              int n, int d_active, Rng& rng,
                              XDist x_dist = XDist::StdNormal, int n_max = 128);

// Mode of the predictive distribution at a single feature vector; the class
// index is returned as a double for the classification families. Errors for
// GM / GMM, which have no predictive target.
double predict_mode(const ModelSpec& spec, const ThetaVector& theta, const Vec& x);

// Predictions for every active observation of a dataset.
Vec predict_mode_rows(const ModelSpec& spec, const ThetaVector& theta,
                      const Dataset& data);

// Tape versions; thetas is an M x theta_dim variable and the result is M x 1.
Var log_prior_t(Tape& tape, const ModelSpec& spec, Var thetas);
Var log_likelihood_t(Tape& tape, const ModelSpec& spec, Var thetas,
                     const Dataset& data);
Var log_joint_t(Tape& tape, const ModelSpec& spec, Var thetas, const Dataset& data);

}  // namespace ampe
