#include <doctest.h>

#include "ampe/metrics.hpp"
#include "oracles.hpp"

using namespace ampe;

namespace {

// Returns a fixed matrix for every dataset; ignores the rng.
class FixedSampler : public PosteriorModel {
 public:
  explicit FixedSampler(Mat thetas) : thetas_(std::move(thetas)) {}
  int dim() const override { return static_cast<int>(thetas_.cols()); }
  Mat sample(const Dataset&, int M, Rng&) const override {
    Mat out(M, thetas_.cols());
    for (int i = 0; i < M; ++i) out.row(i) = thetas_.row(i % thetas_.rows());
    return out;
  }

 private:
  Mat thetas_;
};

Dataset gm_points(const std::vector<double>& xs) {
  Dataset d;
  const int n = static_cast<int>(xs.size());
  d.x = Mat::Zero(n, 1);
  for (int i = 0; i < n; ++i) d.x(i, 0) = xs[i];
  d.obs_mask.assign(n, 1);
  d.feat_mask.assign(1, 1);
  d.n_active = n;
  d.d_active = 1;
  return d;
}

GaussianDist gauss1(double mean, double var) {
  GaussianDist g;
  g.mean = Vec::Constant(1, mean);
  g.cov = Mat::Constant(1, 1, var);
  return g;
}

}  // namespace

TEST_CASE("metric_gm_l2 on hand-computed cases") {
  ModelSpec spec;
  spec.family = Family::GM;
  spec.d_max = 1;
  std::vector<Dataset> sets{gm_points({0.0, 2.0})};
  FixedSampler mean_sampler(Mat::Constant(1, 1, 1.0));
  Rng rng(1);
  MetricReport r = metric_gm_l2(mean_sampler, spec, sets, 4, rng);
  CHECK(r.mean == doctest::Approx(2.0).epsilon(1e-12));  // (0-1)^2 + (2-1)^2
  CHECK(r.test_datasets == 1);

  std::vector<Dataset> one{gm_points({0.7})};
  FixedSampler exact(Mat::Constant(1, 1, 0.7));
  Rng rng2(2);
  CHECK(metric_gm_l2(exact, spec, one, 2, rng2).mean == doctest::Approx(0.0));

  // Permutation invariance of the observation sum.
  std::vector<Dataset> flipped{gm_points({2.0, 0.0})};
  Rng rng3(1);
  CHECK(metric_gm_l2(mean_sampler, spec, flipped, 4, rng3).mean ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("metric_gmm_l2: nearest-cluster matching") {
  ModelSpec spec;
  spec.family = Family::GMM;
  spec.d_max = 1;
  spec.k_clusters = 2;
  std::vector<Dataset> sets{gm_points({1.0})};
  Mat mus(1, 2);
  mus << 0.0, 10.0;
  FixedSampler sampler(mus);
  Rng rng(3);
  CHECK(metric_gmm_l2(sampler, spec, sets, 1, rng).mean ==
        doctest::Approx(1.0).epsilon(1e-12));

  // All clusters equal reduces to the single-Gaussian metric.
  ModelSpec gm_one;
  gm_one.family = Family::GM;
  gm_one.d_max = 1;
  Mat same(1, 2);
  same << 0.8, 0.8;
  FixedSampler same_sampler(same);
  FixedSampler gm_sampler(Mat::Constant(1, 1, 0.8));
  std::vector<Dataset> data{gm_points({0.0, 1.0, 2.5})};
  Rng r1(4), r2(4);
  CHECK(metric_gmm_l2(same_sampler, spec, data, 1, r1).mean ==
        doctest::Approx(metric_gm_l2(gm_sampler, gm_one, data, 1, r2).mean));

  // Brute force over all cluster assignments on random instances.
  Rng rng5(5);
  ModelSpec spec5;
  spec5.family = Family::GMM;
  spec5.d_max = 2;
  spec5.k_clusters = 4;
  ThetaVector theta = sample_theta(spec5, rng5);
  Dataset d = sample_dataset(spec5, theta, 6, rng5, XDist::StdNormal, 6);
  Mat sample_row = sample_theta(spec5, rng5).values.transpose();
  FixedSampler s5(sample_row);
  Rng r5(6);
  MetricReport rep = metric_gmm_l2(s5, spec5, {d}, 1, r5);
  double brute = 0.0;
  for (int i = 0; i < 6; ++i) {
    double best = 1e300;
    for (int k = 0; k < 4; ++k) {
      double sq = 0.0;
      for (int j = 0; j < 2; ++j) {
        double diff = d.x(i, j) - sample_row(0, k * 2 + j);
        sq += diff * diff;
      }
      best = std::min(best, sq);
    }
    brute += best;
  }
  CHECK(rep.mean == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("metric_predictive_l2 and metric_accuracy") {
  ModelSpec spec;
  spec.family = Family::LR;
  spec.d_max = 1;
  // Noiseless dataset from theta = (w=2, b=1).
  Dataset d = gm_points({0.0, 1.0, -1.0});
  d.y = Vec(3);
  d.y << 1.0, 3.0, -1.0;

  Vec exact(2);
  exact << 2.0, 1.0;
  FixedSampler perfect(exact.transpose());
  Rng r1(7);
  CHECK(metric_predictive_l2(perfect, spec, {d}, 1, r1).mean ==
        doctest::Approx(0.0));

  FixedSampler zero(Mat::Zero(1, 2));
  Rng r2(8);
  CHECK(metric_predictive_l2(zero, spec, {d}, 1, r2).mean ==
        doctest::Approx(d.y.squaredNorm()).epsilon(1e-12));

  Vec off(2);
  off << 1.0, 0.0;  // predictions (0, 1, -1) vs targets (1, 3, -1)
  FixedSampler shifted(off.transpose());
  Rng r3(9);
  CHECK(metric_predictive_l2(shifted, spec, {d}, 1, r3).mean ==
        doctest::Approx(1.0 + 4.0 + 0.0).epsilon(1e-12));

  ModelSpec cls;
  cls.family = Family::LC;
  cls.d_max = 1;
  cls.n_classes = 2;
  Dataset dc = gm_points({1.0, -1.0, 2.0, -2.0});
  dc.y_class = {1, 0, 1, 0};
  Vec w(2);
  w << -1.0, 1.0;  // class 1 wins for x > 0
  FixedSampler clf(w.transpose());
  Rng r4(10);
  CHECK(metric_accuracy(clf, cls, {dc}, 1, r4).mean == doctest::Approx(100.0));

  dc.y_class = {1, 1, 1, 1};
  Rng r5(11);
  CHECK(metric_accuracy(clf, cls, {dc}, 1, r5).mean == doctest::Approx(50.0));
}

TEST_CASE("symmetric KL closed form") {
  GaussianDist std1 = gauss1(0.0, 1.0);
  CHECK(symmetric_kl_gaussian(std1, std1) == doctest::Approx(0.0));
  CHECK(symmetric_kl_gaussian(std1, gauss1(1.0, 1.0)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // 0.5 KL(p||q) + 0.5 KL(q||p) with variances 1 and 4: the log terms
  // cancel, leaving (1/4)(1/4 + 4 - 2) = 0.5625.
  CHECK(symmetric_kl_gaussian(std1, gauss1(0.0, 4.0)) ==
        doctest::Approx(0.5625).epsilon(1e-12));

  Rng rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    GaussianDist a = gauss1(rng.normal(), 0.5 + rng.uniform());
    GaussianDist b = gauss1(rng.normal(), 0.5 + rng.uniform());
    CHECK(symmetric_kl_gaussian(a, b) >= 0.0);
    CHECK(symmetric_kl_gaussian(a, b) ==
          doctest::Approx(symmetric_kl_gaussian(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("Monte Carlo symmetric KL cross-checks the closed form") {
  class GaussianModel : public PosteriorModel {
   public:
    explicit GaussianModel(GaussianDist g) : g_(std::move(g)) {}
    int dim() const override { return g_.dim(); }
    Mat sample(const Dataset&, int M, Rng& rng) const override {
      return g_.sample(M, rng);
    }
    bool has_logq() const override { return true; }
    Vec logq(const Dataset&, const Mat& thetas) const override {
      return g_.logpdf_rows(thetas);
    }

   private:
    GaussianDist g_;
  };

  Dataset dummy = gm_points({0.0});
  GaussianDist p = gauss1(0.3, 0.8);

  GaussianModel same(p);
  Rng r1(13);
  McEstimate zero = symmetric_kl_mc(same, dummy, p, 4096, r1);
  CHECK(std::abs(zero.value) < 3.0 * std::max(zero.se, 1e-6));

  GaussianDist q = gauss1(-0.4, 1.6);
  GaussianModel qm(q);
  Rng r2(17);
  McEstimate est = symmetric_kl_mc(qm, dummy, p, 10000, r2);
  CHECK(std::abs(est.value - symmetric_kl_gaussian(p, q)) < 3.0 * est.se);

  Rng r3(19), r4(19);
  CHECK(symmetric_kl_mc(qm, dummy, p, 256, r3).value ==
        symmetric_kl_mc(qm, dummy, p, 256, r4).value);
}

TEST_CASE("w2: exact values, symmetry, brute force, 1-D sorting") {
  Mat a(3, 2), b(3, 2);
  a << 0, 0, 1, 1, 2, 2;
  b = a;
  CHECK(w2_squared_empirical(a, b) == doctest::Approx(0.0));

  Mat one_a(1, 1), one_b(1, 1);
  one_a << 0.0;
  one_b << 1.0;
  CHECK(w2_squared_empirical(one_a, one_b) == doctest::Approx(1.0));

  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const int m = 7;
    Mat ra = rng.normal_mat(m, 3);
    Mat rb = rng.normal_mat(m, 3);
    const double fast = w2_squared_empirical(ra, rb);
    const double brute = oracles::w2_brute_force(ra, rb);
    CHECK(fast == doctest::Approx(brute).epsilon(1e-12));
    CHECK(w2_squared_empirical(rb, ra) == doctest::Approx(fast).epsilon(1e-12));
  }

  // The 1-D sorted pairing equals the Hungarian assignment.
  for (int rep = 0; rep < 10; ++rep) {
    const int m = 16;
    Mat xa = rng.normal_mat(m, 1);
    Mat xb = rng.normal_mat(m, 1);
    Mat cost(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        cost(i, j) = (xa(i, 0) - xb(j, 0)) * (xa(i, 0) - xb(j, 0));
    auto assign = hungarian_assignment(cost);
    double total = 0.0;
    for (int i = 0; i < m; ++i) total += cost(i, assign[i]);
    CHECK(std::abs(w2_squared_empirical(xa, xb) - total / m) < 1e-10);
  }
}

TEST_CASE("w2 between separated Gaussians approaches the analytic value") {
  Rng rng(23);
  const int m = 256;
  Mat a = rng.normal_mat(m, 1);
  Mat b = rng.normal_mat(m, 1);
  b.array() += 2.0;
  // Analytic W2^2 between N(0,1) and N(2,1) is 4.
  CHECK(std::abs(w2_squared_empirical(a, b) - 4.0) / 4.0 < 0.15);
}

TEST_CASE("w2 rejects oversized inputs; subsample_rows shrinks them") {
  Rng rng(29);
  Mat a = rng.normal_mat(600, 2);
  Mat b = rng.normal_mat(600, 2);
  CHECK_THROWS_AS(w2_squared_empirical(a, b), ValidationError);
  Mat a_small = subsample_rows(a, 128, rng);
  CHECK(a_small.rows() == 128);
  CHECK(std::isfinite(w2_squared_empirical(a_small, subsample_rows(b, 128, rng))));
}

TEST_CASE("report standard errors shrink like one over sqrt T") {
  ModelSpec spec;
  spec.family = Family::GM;
  spec.d_max = 1;
  Rng rng(31);
  auto make_sets = [&](int count) {
    std::vector<Dataset> sets;
    for (int i = 0; i < count; ++i) {
      ThetaVector t = sample_theta(spec, rng);
      sets.push_back(sample_dataset(spec, t, 16, rng, XDist::StdNormal, 16));
    }
    return sets;
  };
  PriorPosterior prior_model(spec);
  Rng r_small(33), r_big(33);
  MetricReport small = metric_gm_l2(prior_model, spec, make_sets(25), 8, r_small);
  MetricReport big = metric_gm_l2(prior_model, spec, make_sets(100), 8, r_big);
  // SE should shrink by about 1/2 when T quadruples.
  CHECK(big.se / small.se > 0.5 * 0.75);
  CHECK(big.se / small.se < 0.5 * 1.25);
}
