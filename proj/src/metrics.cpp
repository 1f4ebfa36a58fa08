#include "ampe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

namespace ampe {

MetricReport make_report(const std::string& name, Vec per_dataset, int S) {
  MetricReport r;
  r.name = name;
  r.per_dataset = std::move(per_dataset);
  r.posterior_samples = S;
  r.test_datasets = static_cast<int>(r.per_dataset.size());
  r.mean = r.per_dataset.mean();
  if (r.test_datasets > 1) {
    double var = (r.per_dataset.array() - r.mean).square().sum() /
                 static_cast<double>(r.test_datasets - 1);
    r.se = std::sqrt(var / r.test_datasets);
  }
  return r;
}

namespace {

template <typename PerSample>
MetricReport sampled_metric(const std::string& name, const PosteriorModel& q,
                            const std::vector<Dataset>& testsets, int S, Rng& rng,
                            const PerSample& per_sample) {
  require(S >= 1, name + ": S must be >= 1");
  require(!testsets.empty(), name + ": no test datasets");
  Vec per_dataset(static_cast<Eigen::Index>(testsets.size()));
  for (size_t t = 0; t < testsets.size(); ++t) {
    Rng r = rng.fork(static_cast<uint64_t>(t));
    Mat thetas = q.sample(testsets[t], S, r);
    double acc = 0.0;
    for (int s = 0; s < S; ++s)
      acc += per_sample(testsets[t], Vec(thetas.row(s).transpose()));
    per_dataset[static_cast<Eigen::Index>(t)] = acc / S;
  }
  return make_report(name, std::move(per_dataset), S);
}

}  // namespace

MetricReport metric_gm_l2(const PosteriorModel& q, const ModelSpec& spec,
                          const std::vector<Dataset>& testsets, int S, Rng& rng) {
  require(spec.family == Family::GM, "metric_gm_l2 requires the GM family");
  return sampled_metric("gm_l2", q, testsets, S, rng,
                        [&](const Dataset& data, const Vec& theta) {
                          CompactData cd = compact(spec, data);
                          double total = 0.0;
                          for (Eigen::Index i = 0; i < cd.x.rows(); ++i)
                            for (size_t j = 0; j < cd.cols.size(); ++j) {
                              double diff = cd.x(i, static_cast<Eigen::Index>(j)) -
                                            theta[cd.cols[j]];
                              total += diff * diff;
                            }
                          return total;
                        });
}

MetricReport metric_gmm_l2(const PosteriorModel& q, const ModelSpec& spec,
                           const std::vector<Dataset>& testsets, int S, Rng& rng) {
  require(spec.family == Family::GMM, "metric_gmm_l2 requires the GMM family");
  return sampled_metric(
      "gmm_l2", q, testsets, S, rng, [&](const Dataset& data, const Vec& theta) {
        CompactData cd = compact(spec, data);
        double total = 0.0;
        for (Eigen::Index i = 0; i < cd.x.rows(); ++i) {
          double best = std::numeric_limits<double>::infinity();
          for (int k = 0; k < spec.k_clusters; ++k) {
            double sq = 0.0;
            for (size_t j = 0; j < cd.cols.size(); ++j) {
              double diff = cd.x(i, static_cast<Eigen::Index>(j)) -
                            theta[k * spec.d_max + cd.cols[j]];
              sq += diff * diff;
            }
            best = std::min(best, sq);
          }
          total += best;
        }
        return total;
      });
}

MetricReport metric_predictive_l2(const PosteriorModel& q, const ModelSpec& spec,
                                  const std::vector<Dataset>& testsets, int S,
                                  Rng& rng) {
  require(spec.is_regression(), "metric_predictive_l2 requires a regression family");
  return sampled_metric("predictive_l2", q, testsets, S, rng,
                        [&](const Dataset& data, const Vec& theta) {
                          ThetaVector tv = make_theta(spec, theta);
                          Vec pred = predict_mode_rows(spec, tv, data);
                          auto rows = data.active_rows();
                          double total = 0.0;
                          for (size_t i = 0; i < rows.size(); ++i) {
                            double diff = data.y[rows[i]] - pred[i];
                            total += diff * diff;
                          }
                          return total;
                        });
}

MetricReport metric_accuracy(const PosteriorModel& q, const ModelSpec& spec,
                             const std::vector<Dataset>& testsets, int S, Rng& rng) {
  require(spec.is_classification(), "metric_accuracy requires a classification family");
  return sampled_metric("accuracy", q, testsets, S, rng,
                        [&](const Dataset& data, const Vec& theta) {
                          ThetaVector tv = make_theta(spec, theta);
                          Vec pred = predict_mode_rows(spec, tv, data);
                          auto rows = data.active_rows();
                          if (rows.empty()) return 0.0;
                          double hits = 0.0;
                          for (size_t i = 0; i < rows.size(); ++i)
                            if (static_cast<int>(pred[i]) == data.y_class[rows[i]])
                              hits += 1.0;
                          return 100.0 * hits / static_cast<double>(rows.size());
                        });
}

double symmetric_kl_gaussian(const GaussianDist& p, const GaussianDist& q) {
  require(p.dim() == q.dim(), "symmetric_kl_gaussian: dimension mismatch");
  const int k = p.dim();
  auto kl = [k](const GaussianDist& a, const GaussianDist& b) {
    Eigen::LLT<Mat> lb(b.cov);
    require(lb.info() == Eigen::Success, "symmetric_kl_gaussian: covariance not SPD");
    const Mat binv_a = lb.solve(a.cov);
    const Vec diff = b.mean - a.mean;
    const double maha = diff.dot(lb.solve(diff));
    Eigen::LLT<Mat> la(a.cov);
    require(la.info() == Eigen::Success, "symmetric_kl_gaussian: covariance not SPD");
    double log_det_ratio = 0.0;
    for (int i = 0; i < k; ++i)
      log_det_ratio += 2.0 * (std::log(Mat(lb.matrixL())(i, i)) -
                              std::log(Mat(la.matrixL())(i, i)));
    return 0.5 * (binv_a.trace() + maha - k + log_det_ratio);
  };
  return 0.5 * kl(p, q) + 0.5 * kl(q, p);
}

McEstimate symmetric_kl_mc(const PosteriorModel& q, const Dataset& data,
                           const GaussianDist& p, int M, Rng& rng) {
  require(M >= 2, "symmetric_kl_mc: M must be >= 2");
  require(q.has_logq(), "symmetric_kl_mc requires a density-evaluable model");
  Rng rp = rng.fork("from_p");
  Rng rq = rng.fork("from_q");
  Mat tp = p.sample(M, rp);
  Mat tq = q.sample(data, M, rq);
  Vec fwd = p.logpdf_rows(tp) - q.logq(data, tp);   // E_p[log p - log q]
  Vec rev = q.logq(data, tq) - p.logpdf_rows(tq);   // E_q[log q - log p]
  Vec terms = 0.5 * (fwd + rev);
  McEstimate est;
  est.value = terms.mean();
  double var = (terms.array() - est.value).square().sum() / (M - 1);
  est.se = std::sqrt(var / M);
  return est;
}

std::vector<int> hungarian_assignment(const Mat& cost) {
  require(cost.rows() == cost.cols(), "hungarian_assignment: matrix must be square");
  const int n = static_cast<int>(cost.rows());
  // Jonker-Volgenant style shortest augmenting path, O(n^3).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double w2_squared_empirical(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows(), "w2_squared_empirical: sample counts must match");
  require(a.cols() == b.cols(), "w2_squared_empirical: dimension mismatch");
  const int m = static_cast<int>(a.rows());
  require(m >= 1, "w2_squared_empirical: empty sample sets");
  require(m <= 512, "w2_squared_empirical: more than 512 samples; subsample first");

  if (a.cols() == 1) {
    std::vector<double> xs(a.col(0).data(), a.col(0).data() + m);
    std::vector<double> ys(b.col(0).data(), b.col(0).data() + m);
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
      double d = xs[i] - ys[i];
      total += d * d;
    }
    return total / m;
  }

  Mat cost(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      cost(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  std::vector<int> assign = hungarian_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < m; ++i) total += cost(i, assign[i]);
  return total / m;
}

Mat subsample_rows(const Mat& a, int M, Rng& rng) {
  require(M >= 1 && M <= a.rows(), "subsample_rows: M out of range");
  if (M == a.rows()) return a;
  std::vector<int> order(a.rows());
  std::iota(order.begin(), order.end(), 0);
  for (int i = static_cast<int>(a.rows()) - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  Mat out(M, a.cols());
  for (int i = 0; i < M; ++i) out.row(i) = a.row(order[i]);
  return out;
}

}  // namespace ampe
