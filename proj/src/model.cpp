#include "ampe/model.hpp"

#include <cmath>

namespace ampe {

namespace {

// Hidden-layer sizes plus output width for the MLP families.
std::vector<std::pair<int, int>> mlp_shapes(const ModelSpec& spec) {
  std::vector<std::pair<int, int>> shapes;  // (rows=out, cols=in) per layer
  int in = spec.d_max;
  for (int l = 0; l < spec.hidden_layers; ++l) {
    shapes.emplace_back(spec.hidden_units, in);
    in = spec.hidden_units;
  }
  const int out = spec.family == Family::NLR ? 1 : spec.n_classes;
  shapes.emplace_back(out, in);
  return shapes;
}

double act_scalar(Activation a, double z) {
  return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// MLP forward for one compacted observation; weights read from the flat
// theta in layer-major order, first-layer columns restricted to the active
// features.
Vec mlp_forward(const ModelSpec& spec, const Vec& theta, const Vec& x_act,
                const std::vector<int>& act_cols) {
  auto shapes = mlp_shapes(spec);
  Vec h = x_act;
  int off = 0;
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto [rows, cols] = shapes[l];
    Vec z = Vec::Zero(rows);
    if (l == 0) {
      for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (size_t j = 0; j < act_cols.size(); ++j)
          acc += theta[off + r * cols + act_cols[j]] * h[static_cast<int>(j)];
        z[r] = acc;
      }
    } else {
      for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += theta[off + r * cols + c] * h[c];
        z[r] = acc;
      }
    }
    off += rows * cols;
    for (int r = 0; r < rows; ++r) z[r] += theta[off + r];
    off += rows;
    if (l + 1 < shapes.size())
      for (int r = 0; r < rows; ++r) z[r] = act_scalar(spec.activation, z[r]);
    h = z;
  }
  return h;
}

double lse(const Vec& v) {
  double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

double loglik_observation(const ModelSpec& spec, const Vec& theta,
                          const CompactData& cd, int i) {
  const int d = static_cast<int>(cd.cols.size());
  switch (spec.family) {
    case Family::GM: {
      double sq = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = cd.x(i, j) - theta[cd.cols[j]];
        sq += diff * diff;
      }
      return -0.5 * sq - 0.5 * d * kLog2Pi;
    }
    case Family::GMM: {
      Vec comp(spec.k_clusters);
      for (int k = 0; k < spec.k_clusters; ++k) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff = cd.x(i, j) - theta[k * spec.d_max + cd.cols[j]];
          sq += diff * diff;
        }
        comp[k] = -0.5 * sq;
      }
      return lse(comp) - std::log(static_cast<double>(spec.k_clusters)) -
             0.5 * d * kLog2Pi;
    }
    case Family::LR: {
      double pred = theta[spec.d_max];
      for (int j = 0; j < d; ++j) pred += theta[cd.cols[j]] * cd.x(i, j);
      const double r = cd.y[i] - pred;
      return -0.5 * r * r / spec.sigma2 - 0.5 * std::log(2.0 * EIGEN_PI * spec.sigma2);
    }
    case Family::LC: {
      Vec logits(spec.n_classes);
      for (int c = 0; c < spec.n_classes; ++c) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
          acc += theta[c * spec.d_max + cd.cols[j]] * cd.x(i, j);
        logits[c] = acc / spec.tau;
      }
      return logits[cd.y_class[i]] - lse(logits);
    }
    case Family::NLR: {
      Vec out = mlp_forward(spec, theta, cd.x.row(i).transpose(), cd.cols);
      const double r = cd.y[i] - out[0];
      return -0.5 * r * r / spec.sigma2 - 0.5 * std::log(2.0 * EIGEN_PI * spec.sigma2);
    }
    case Family::NLC: {
      Vec logits = mlp_forward(spec, theta, cd.x.row(i).transpose(), cd.cols) / spec.tau;
      return logits[cd.y_class[i]] - lse(logits);
    }
  }
  return 0.0;
}

double loglik_compact(const ModelSpec& spec, const Vec& theta,
                      const CompactData& cd) {
  const int n = static_cast<int>(cd.rows.size());
  if (n == 0) return 0.0;
  std::vector<double> terms(n);
  for (int i = 0; i < n; ++i) terms[i] = loglik_observation(spec, theta, cd, i);
  return stable_sum(std::move(terms));
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::GM: return "gm";
    case Family::GMM: return "gmm";
    case Family::LR: return "lr";
    case Family::LC: return "lc";
    case Family::NLR: return "nlr";
    case Family::NLC: return "nlc";
  }
  return "?";
}

Family family_from_name(const std::string& s) {
  if (s == "gm") return Family::GM;
  if (s == "gmm") return Family::GMM;
  if (s == "lr") return Family::LR;
  if (s == "lc") return Family::LC;
  if (s == "nlr") return Family::NLR;
  if (s == "nlc") return Family::NLC;
  throw ValidationError("unknown model family: " + s);
}

void ModelSpec::validate() const {
  require(d_max >= 1, "model.d_max must be >= 1");
  require(sigma2 > 0.0, "model.sigma2 must be > 0");
  require(tau > 0.0, "model.tau must be > 0");
  if (family == Family::GMM) require(k_clusters >= 2, "model.k_clusters must be >= 2");
  if (is_classification()) require(n_classes >= 2, "model.n_classes must be >= 2");
  if (has_mlp()) {
    require(hidden_layers == 1 || hidden_layers == 2,
            "model.hidden_layers must be 1 or 2");
    require(hidden_units >= 1, "model.hidden_units must be >= 1");
  }
}

int theta_dim(const ModelSpec& spec) {
  switch (spec.family) {
    case Family::GM: return spec.d_max;
    case Family::GMM: return spec.k_clusters * spec.d_max;
    case Family::LR: return spec.d_max + 1;
    case Family::LC: return spec.n_classes * spec.d_max;
    case Family::NLR:
    case Family::NLC: {
      int total = 0;
      for (const auto& [rows, cols] : mlp_shapes(spec)) total += rows * cols + rows;
      return total;
    }
  }
  return 0;
}

std::vector<LayoutEntry> theta_layout(const ModelSpec& spec) {
  std::vector<LayoutEntry> layout;
  switch (spec.family) {
    case Family::GM:
      layout.push_back({"mu", 0, 1, spec.d_max});
      break;
    case Family::GMM:
      layout.push_back({"mu", 0, spec.k_clusters, spec.d_max});
      break;
    case Family::LR:
      layout.push_back({"w", 0, 1, spec.d_max});
      layout.push_back({"b", spec.d_max, 1, 1});
      break;
    case Family::LC:
      layout.push_back({"W", 0, spec.n_classes, spec.d_max});
      break;
    case Family::NLR:
    case Family::NLC: {
      int off = 0;
      auto shapes = mlp_shapes(spec);
      for (size_t l = 0; l < shapes.size(); ++l) {
        const auto [rows, cols] = shapes[l];
        const std::string idx = std::to_string(l + 1);
        layout.push_back({"W" + idx, off, rows, cols});
        off += rows * cols;
        layout.push_back({"b" + idx, off, 1, rows});
        off += rows;
      }
      break;
    }
  }
  return layout;
}

ThetaVector make_theta(const ModelSpec& spec, Vec values) {
  require(values.size() == theta_dim(spec),
          "theta length does not match theta_dim for this spec");
  return ThetaVector{std::move(values), theta_layout(spec)};
}

std::vector<int> Dataset::active_rows() const {
  std::vector<int> idx;
  for (int i = 0; i < n_max(); ++i)
    if (obs_mask[i]) idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::active_cols() const {
  std::vector<int> idx;
  for (int j = 0; j < d_max(); ++j)
    if (feat_mask[j]) idx.push_back(j);
  return idx;
}

void validate_dataset(const ModelSpec& spec, const Dataset& data) {
  require(static_cast<int>(data.obs_mask.size()) == data.n_max(),
          "obs_mask length mismatch");
  require(static_cast<int>(data.feat_mask.size()) == data.d_max(),
          "feat_mask length mismatch");
  require(data.d_max() == spec.d_max, "dataset feature width does not match spec");
  int n = 0, d = 0;
  for (auto m : data.obs_mask) n += m ? 1 : 0;
  for (auto m : data.feat_mask) d += m ? 1 : 0;
  require(n == data.n_active, "n_active does not match obs_mask popcount");
  require(d == data.d_active, "d_active does not match feat_mask popcount");
  for (int i = 0; i < data.n_max(); ++i)
    for (int j = 0; j < data.d_max(); ++j)
      if (!data.obs_mask[i] || !data.feat_mask[j])
        require(data.x(i, j) == 0.0, "masked x entries must be exactly zero");
  if (spec.is_regression()) {
    require(data.y.size() == data.n_max(), "regression dataset requires y");
    for (int i = 0; i < data.n_max(); ++i)
      if (!data.obs_mask[i]) require(data.y[i] == 0.0, "masked y entries must be zero");
  } else if (spec.is_classification()) {
    require(static_cast<int>(data.y_class.size()) == data.n_max(),
            "classification dataset requires y_class");
    for (int i = 0; i < data.n_max(); ++i)
      if (data.obs_mask[i])
        require(data.y_class[i] >= 0 && data.y_class[i] < spec.n_classes,
                "class index out of range");
  }
}

CompactData compact(const ModelSpec& spec, const Dataset& data) {
  CompactData cd;
  cd.rows = data.active_rows();
  cd.cols = data.active_cols();
  cd.x.resize(static_cast<Eigen::Index>(cd.rows.size()),
              static_cast<Eigen::Index>(cd.cols.size()));
  for (size_t i = 0; i < cd.rows.size(); ++i)
    for (size_t j = 0; j < cd.cols.size(); ++j)
      cd.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          data.x(cd.rows[i], cd.cols[j]);
  if (spec.is_regression()) {
    cd.y.resize(static_cast<Eigen::Index>(cd.rows.size()));
    for (size_t i = 0; i < cd.rows.size(); ++i)
      cd.y[static_cast<Eigen::Index>(i)] = data.y[cd.rows[i]];
  } else if (spec.is_classification()) {
    cd.y_class.reserve(cd.rows.size());
    for (int r : cd.rows) cd.y_class.push_back(data.y_class[r]);
  }
  return cd;
}

double log_prior(const ModelSpec& spec, const ThetaVector& theta) {
  require(theta.values.size() == theta_dim(spec), "theta dimension mismatch");
  const int k = static_cast<int>(theta.values.size());
  return -0.5 * theta.values.squaredNorm() - 0.5 * k * kLog2Pi;
}

double log_likelihood(const ModelSpec& spec, const ThetaVector& theta,
                      const Dataset& data) {
  require(theta.values.size() == theta_dim(spec), "theta dimension mismatch");
  validate_dataset(spec, data);
  return loglik_compact(spec, theta.values, compact(spec, data));
}

double log_joint(const ModelSpec& spec, const ThetaVector& theta,
                 const Dataset& data) {
  return log_prior(spec, theta) + log_likelihood(spec, theta, data);
}

Vec log_prior_rows(const ModelSpec& spec, const Mat& thetas) {
  const int k = theta_dim(spec);
  require(thetas.cols() == k, "theta dimension mismatch");
  return (-0.5 * thetas.rowwise().squaredNorm().array() - 0.5 * k * kLog2Pi).matrix();
}

Vec log_likelihood_rows(const ModelSpec& spec, const Mat& thetas,
                        const Dataset& data) {
  require(thetas.cols() == theta_dim(spec), "theta dimension mismatch");
  validate_dataset(spec, data);
  CompactData cd = compact(spec, data);
  Vec out(thetas.rows());
  for (Eigen::Index m = 0; m < thetas.rows(); ++m)
    out[m] = loglik_compact(spec, thetas.row(m).transpose(), cd);
  return out;
}

Vec log_joint_rows(const ModelSpec& spec, const Mat& thetas, const Dataset& data) {
  return log_prior_rows(spec, thetas) + log_likelihood_rows(spec, thetas, data);
}

ThetaVector sample_theta(const ModelSpec& spec, Rng& rng) {
  return make_theta(spec, rng.normal_vec(theta_dim(spec)));
}

Dataset sample_dataset(const ModelSpec& spec, const ThetaVector& theta, int n,
                       Rng& rng, XDist x_dist, int n_max) {
  require(n >= 0 && n <= n_max, "sample_dataset: n must satisfy 0 <= n <= n_max");
  require(theta.values.size() == theta_dim(spec), "theta dimension mismatch");
  return sample_dataset_masked(spec, theta, n, spec.d_max, rng, x_dist, n_max);
}

Dataset sample_dataset_masked(const ModelSpec& spec, const ThetaVector& theta,
                              int n, int d_active, Rng& rng, XDist x_dist,
                              int n_max) {
  require(n >= 0 && n <= n_max, "sample_dataset: n must satisfy 0 <= n <= n_max");
  require(d_active >= 1 && d_active <= spec.d_max, "d_active out of range");
  Dataset data;
  data.x = Mat::Zero(n_max, spec.d_max);
  data.obs_mask.assign(n_max, 0);
  data.feat_mask.assign(spec.d_max, 0);
  for (int j = 0; j < d_active; ++j) data.feat_mask[j] = 1;
  data.n_active = n;
  data.d_active = d_active;
  if (spec.is_regression()) data.y = Vec::Zero(n_max);
  if (spec.is_classification()) data.y_class.assign(n_max, 0);

  std::vector<int> cols(d_active);
  for (int j = 0; j < d_active; ++j) cols[j] = j;

  for (int i = 0; i < n; ++i) {
    data.obs_mask[i] = 1;
    switch (spec.family) {
      case Family::GM:
        for (int j = 0; j < d_active; ++j)
          data.x(i, j) = theta.values[j] + rng.normal();
        break;
      case Family::GMM: {
        const int k = rng.uniform_int(0, spec.k_clusters - 1);
        for (int j = 0; j < d_active; ++j)
          data.x(i, j) = theta.values[k * spec.d_max + j] + rng.normal();
        break;
      }
      default:
        for (int j = 0; j < d_active; ++j)
          data.x(i, j) = x_dist == XDist::StdNormal ? rng.normal()
                                                    : rng.uniform(-1.0, 1.0);
        break;
    }
    if (spec.is_unsupervised()) continue;

    Vec x_act = data.x.row(i).head(d_active).transpose();
    switch (spec.family) {
      case Family::LR: {
        double pred = theta.values[spec.d_max];
        for (int j = 0; j < d_active; ++j) pred += theta.values[j] * x_act[j];
        data.y[i] = pred + std::sqrt(spec.sigma2) * rng.normal();
        break;
      }
      case Family::NLR: {
        Vec out = mlp_forward(spec, theta.values, x_act, cols);
        data.y[i] = out[0] + std::sqrt(spec.sigma2) * rng.normal();
        break;
      }
      case Family::LC:
      case Family::NLC: {
        Vec logits(spec.n_classes);
        if (spec.family == Family::LC) {
          for (int c = 0; c < spec.n_classes; ++c) {
            double acc = 0.0;
            for (int j = 0; j < d_active; ++j)
              acc += theta.values[c * spec.d_max + j] * x_act[j];
            logits[c] = acc / spec.tau;
          }
        } else {
          logits = mlp_forward(spec, theta.values, x_act, cols) / spec.tau;
        }
        Eigen::ArrayXd p = (logits.array() - lse(logits)).exp();
        double u = rng.uniform();
        double acc = 0.0;
        int cls = spec.n_classes - 1;
        for (int c = 0; c < spec.n_classes; ++c) {
          acc += p[c];
          if (u < acc) {
            cls = c;
            break;
          }
        }
        data.y_class[i] = cls;
        break;
      }
      default:
        break;
    }
  }
  return data;
}

double predict_mode(const ModelSpec& spec, const ThetaVector& theta, const Vec& x) {
  require(!spec.is_unsupervised(),
          "predict_mode is undefined for the unsupervised families");
  require(x.size() == spec.d_max, "feature vector width mismatch");
  std::vector<int> cols(spec.d_max);
  for (int j = 0; j < spec.d_max; ++j) cols[j] = j;
  switch (spec.family) {
    case Family::LR: {
      double pred = theta.values[spec.d_max];
      for (int j = 0; j < spec.d_max; ++j) pred += theta.values[j] * x[j];
      return pred;
    }
    case Family::NLR:
      return mlp_forward(spec, theta.values, x, cols)[0];
    case Family::LC: {
      int best = 0;
      double best_v = -1e300;
      for (int c = 0; c < spec.n_classes; ++c) {
        double acc = 0.0;
        for (int j = 0; j < spec.d_max; ++j)
          acc += theta.values[c * spec.d_max + j] * x[j];
        if (acc > best_v) {
          best_v = acc;
          best = c;
        }
      }
      return static_cast<double>(best);
    }
    case Family::NLC: {
      Vec logits = mlp_forward(spec, theta.values, x, cols);
      int best = 0;
      logits.maxCoeff(&best);
      return static_cast<double>(best);
    }
    default:
      return 0.0;
  }
}

Vec predict_mode_rows(const ModelSpec& spec, const ThetaVector& theta,
                      const Dataset& data) {
  auto rows = data.active_rows();
  Vec out(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    out[static_cast<Eigen::Index>(i)] =
        predict_mode(spec, theta, data.x.row(rows[i]).transpose());
  return out;
}

Var log_prior_t(Tape& tape, const ModelSpec& spec, Var thetas) {
  const int k = theta_dim(spec);
  require(tape.val(thetas).cols() == k, "theta dimension mismatch");
  return tape.scal_add(tape.scal_mul(tape.row_sum(tape.square(thetas)), -0.5),
                       -0.5 * k * kLog2Pi);
}

namespace {

// Scalar log-likelihood subgraph for one theta row (1 x k).
Var loglik_row_t(Tape& tape, const ModelSpec& spec, Var theta,
                 const CompactData& cd) {
  const int n = static_cast<int>(cd.rows.size());
  const int d = static_cast<int>(cd.cols.size());
  if (n == 0) return tape.constant(Mat::Zero(1, 1));
  Var xc = tape.constant(cd.x);
  switch (spec.family) {
    case Family::GM: {
      Var mu = tape.gather_cols(theta, cd.cols);
      Var diff = tape.add_row(tape.constant(-cd.x), mu);
      return tape.scal_add(tape.scal_mul(tape.sum_all(tape.square(diff)), -0.5),
                           -0.5 * n * d * kLog2Pi);
    }
    case Family::GMM: {
      const int K = spec.k_clusters;
      Var mu = tape.gather_cols(tape.reshape_rows(theta, K, spec.d_max), cd.cols);
      Var cross = tape.matmul_nt(xc, mu);                       // n x K
      Var musq = tape.transpose(tape.row_sum(tape.square(mu))); // 1 x K
      Mat xsq = cd.x.rowwise().squaredNorm().replicate(1, K);
      Var dist = tape.add(tape.add_row(tape.scal_mul(cross, -2.0), musq),
                          tape.constant(xsq));
      Var logits = tape.scal_add(tape.scal_mul(dist, -0.5),
                                 -0.5 * d * kLog2Pi - std::log(double(K)));
      return tape.sum_all(tape.row_lse(logits));
    }
    case Family::LR: {
      Var w = tape.gather_cols(tape.slice_cols(theta, 0, spec.d_max), cd.cols);
      Var b = tape.slice_cols(theta, spec.d_max, 1);
      Var pred = tape.add_row(tape.matmul_nt(xc, w), b);
      Var resid = tape.sub(tape.constant(cd.y), pred);
      return tape.scal_add(
          tape.scal_mul(tape.sum_all(tape.square(resid)), -0.5 / spec.sigma2),
          -0.5 * n * std::log(2.0 * EIGEN_PI * spec.sigma2));
    }
    case Family::LC: {
      Var W = tape.gather_cols(tape.reshape_rows(theta, spec.n_classes, spec.d_max),
                               cd.cols);
      Var logits = tape.scal_mul(tape.matmul_nt(xc, W), 1.0 / spec.tau);
      return tape.sum_all(
          tape.sub(tape.pick_per_row(logits, cd.y_class), tape.row_lse(logits)));
    }
    case Family::NLR:
    case Family::NLC: {
      auto shapes = mlp_shapes(spec);
      Var h = xc;
      int off = 0;
      for (size_t l = 0; l < shapes.size(); ++l) {
        const auto [rows, cols] = shapes[l];
        Var W = tape.reshape_rows(tape.slice_cols(theta, off, rows * cols), rows, cols);
        if (l == 0) W = tape.gather_cols(W, cd.cols);
        off += rows * cols;
        Var b = tape.slice_cols(theta, off, rows);
        off += rows;
        Var z = tape.add_row(tape.matmul_nt(h, W), b);
        if (l + 1 < shapes.size())
          h = spec.activation == Activation::Relu ? tape.relu(z) : tape.tanh(z);
        else
          h = z;
      }
      if (spec.family == Family::NLR) {
        Var resid = tape.sub(tape.constant(cd.y), h);
        return tape.scal_add(
            tape.scal_mul(tape.sum_all(tape.square(resid)), -0.5 / spec.sigma2),
            -0.5 * n * std::log(2.0 * EIGEN_PI * spec.sigma2));
      }
      Var logits = tape.scal_mul(h, 1.0 / spec.tau);
      return tape.sum_all(
          tape.sub(tape.pick_per_row(logits, cd.y_class), tape.row_lse(logits)));
    }
  }
  return tape.constant(Mat::Zero(1, 1));
}

}  // namespace

Var log_likelihood_t(Tape& tape, const ModelSpec& spec, Var thetas,
                     const Dataset& data) {
  require(tape.val(thetas).cols() == theta_dim(spec), "theta dimension mismatch");
  validate_dataset(spec, data);
  CompactData cd = compact(spec, data);
  const int M = static_cast<int>(tape.val(thetas).rows());
  Var out;
  for (int m = 0; m < M; ++m) {
    Var row = M == 1 ? thetas : tape.slice_rows(thetas, m, 1);
    Var ll = loglik_row_t(tape, spec, row, cd);
    out = m == 0 ? ll : tape.concat_rows(out, ll);
  }
  return out;
}

Var log_joint_t(Tape& tape, const ModelSpec& spec, Var thetas, const Dataset& data) {
  return tape.add(log_prior_t(tape, spec, thetas),
                  log_likelihood_t(tape, spec, thetas, data));
}

}  // namespace ampe
