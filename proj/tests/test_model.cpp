#include <doctest.h>

#include <set>

#include "ampe/model.hpp"
#include "ampe/params.hpp"

using namespace ampe;

namespace {

ModelSpec gm(int d) {
  ModelSpec s;
  s.family = Family::GM;
  s.d_max = d;
  return s;
}

ModelSpec lr(int d) {
  ModelSpec s;
  s.family = Family::LR;
  s.d_max = d;
  return s;
}

ModelSpec lc(int d, int classes) {
  ModelSpec s;
  s.family = Family::LC;
  s.d_max = d;
  s.n_classes = classes;
  return s;
}

ModelSpec gmm(int d, int k) {
  ModelSpec s;
  s.family = Family::GMM;
  s.d_max = d;
  s.k_clusters = k;
  return s;
}

ModelSpec nlr(int d, int layers, Activation act = Activation::Relu) {
  ModelSpec s;
  s.family = Family::NLR;
  s.d_max = d;
  s.hidden_layers = layers;
  s.activation = act;
  return s;
}

ModelSpec nlc(int d, int layers, int classes) {
  ModelSpec s;
  s.family = Family::NLC;
  s.d_max = d;
  s.hidden_layers = layers;
  s.n_classes = classes;
  return s;
}

Dataset single_obs(const ModelSpec& spec, const std::vector<double>& xs,
                   double y = 0.0, int y_class = 0, int n_max = 4) {
  Dataset d;
  d.x = Mat::Zero(n_max, spec.d_max);
  d.obs_mask.assign(n_max, 0);
  d.feat_mask.assign(spec.d_max, 1);
  d.obs_mask[0] = 1;
  d.n_active = 1;
  d.d_active = spec.d_max;
  for (int j = 0; j < spec.d_max; ++j) d.x(0, j) = xs[j];
  if (spec.is_regression()) {
    d.y = Vec::Zero(n_max);
    d.y[0] = y;
  }
  if (spec.is_classification()) {
    d.y_class.assign(n_max, 0);
    d.y_class[0] = y_class;
  }
  return d;
}

}  // namespace

TEST_CASE("theta_dim per family") {
  CHECK(theta_dim(gm(2)) == 2);
  CHECK(theta_dim(lr(100)) == 101);
  CHECK(theta_dim(nlr(1, 1)) == 97);  // 1*32+32 + 32*1+1
  CHECK(theta_dim(gmm(3, 4)) == 12);
  CHECK(theta_dim(lc(5, 3)) == 15);
  CHECK(theta_dim(nlc(2, 2, 3)) == 2 * 32 + 32 + 32 * 32 + 32 + 32 * 3 + 3);
}

TEST_CASE("theta_layout covers the vector with unique names") {
  for (const ModelSpec& spec :
       {gm(3), gmm(2, 3), lr(4), lc(3, 4), nlr(2, 2), nlc(3, 1, 2)}) {
    auto layout = theta_layout(spec);
    int total = 0;
    std::set<std::string> names;
    for (const auto& e : layout) {
      CHECK(e.offset == total);
      total += e.extent();
      names.insert(e.name);
    }
    CHECK(total == theta_dim(spec));
    CHECK(names.size() == layout.size());
  }
}

TEST_CASE("log_prior values") {
  ModelSpec s = gm(4);
  ThetaVector zero = make_theta(s, Vec::Zero(4));
  CHECK(log_prior(s, zero) == doctest::Approx(-2.0 * kLog2Pi).epsilon(1e-12));

  ModelSpec s1 = gm(1);
  ThetaVector one = make_theta(s1, Vec::Constant(1, 1.0));
  CHECK(log_prior(s1, one) == doctest::Approx(-1.4189385332046727).epsilon(1e-12));

  ModelSpec s2 = gm(2);
  Vec a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  CHECK(log_prior(s2, make_theta(s2, a)) == log_prior(s2, make_theta(s2, b)));
}

TEST_CASE("log_prior rejects a mismatched theta") {
  ModelSpec s = gm(3);
  CHECK_THROWS_AS(log_prior(s, ThetaVector{Vec::Zero(2), {}}), ValidationError);
}

TEST_CASE("log_likelihood frozen examples") {
  ModelSpec g = gm(1);
  Dataset d0 = single_obs(g, {0.0});
  ThetaVector mu0 = make_theta(g, Vec::Zero(1));
  CHECK(log_likelihood(g, mu0, d0) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));

  ModelSpec l = lr(1);
  Dataset dl = single_obs(l, {0.0}, 0.0);
  ThetaVector wb = make_theta(l, Vec::Zero(2));
  CHECK(log_likelihood(l, wb, dl) ==
        doctest::Approx(-0.22579135264472743).epsilon(1e-12));

  ModelSpec c = lc(2, 2);
  Dataset dc = single_obs(c, {0.7, -0.3}, 0.0, 1);
  ThetaVector w0 = make_theta(c, Vec::Zero(4));
  CHECK(log_likelihood(c, w0, dc) == doctest::Approx(std::log(0.5)).epsilon(1e-12));

  ModelSpec m = gmm(1, 2);
  Dataset dm = single_obs(m, {0.0});
  ThetaVector mus = make_theta(m, Vec::Zero(2));
  CHECK(log_likelihood(m, mus, dm) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));
}

TEST_CASE("log_joint: frozen value, empty dataset, additivity") {
  ModelSpec g = gm(1);
  Dataset d0 = single_obs(g, {0.0});
  ThetaVector mu0 = make_theta(g, Vec::Zero(1));
  CHECK(log_joint(g, mu0, d0) ==
        doctest::Approx(-1.8378770664093453).epsilon(1e-12));

  Dataset empty = d0;
  empty.obs_mask[0] = 0;
  empty.n_active = 0;
  empty.x.setZero();
  CHECK(log_joint(g, mu0, empty) == log_prior(g, mu0));

  // Additivity over a disjoint union of observations.
  Rng rng(4);
  ModelSpec g3 = gm(3);
  ThetaVector theta = sample_theta(g3, rng);
  Dataset d1 = sample_dataset(g3, theta, 5, rng, XDist::StdNormal, 16);
  Dataset d2 = sample_dataset(g3, theta, 7, rng, XDist::StdNormal, 16);
  Dataset both = d1;
  both.x = Mat::Zero(16, 3);
  for (int i = 0; i < 5; ++i) both.x.row(i) = d1.x.row(i);
  for (int i = 0; i < 7; ++i) both.x.row(5 + i) = d2.x.row(i);
  both.obs_mask.assign(16, 0);
  for (int i = 0; i < 12; ++i) both.obs_mask[i] = 1;
  both.n_active = 12;
  CHECK(log_joint(g3, theta, both) ==
        doctest::Approx(log_prior(g3, theta) + log_likelihood(g3, theta, d1) +
                        log_likelihood(g3, theta, d2))
            .epsilon(1e-12));
}

TEST_CASE("sample_theta: determinism and prior moments") {
  ModelSpec s = gm(5);
  Rng a(99), b(99);
  CHECK(sample_theta(s, a).values == sample_theta(s, b).values);

  const int n = 10000;
  Rng rng(100);
  Vec sum = Vec::Zero(5), sq = Vec::Zero(5);
  for (int i = 0; i < n; ++i) {
    Vec t = sample_theta(s, rng).values;
    sum += t;
    sq += t.cwiseProduct(t);
  }
  for (int j = 0; j < 5; ++j) {
    double mean = sum[j] / n;
    double var = sq[j] / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(var > 0.94);
    CHECK(var < 1.06);
  }
}

TEST_CASE("sample_dataset: GM means, LC frequencies, empty case") {
  ModelSpec g = gm(2);
  Vec mu(2);
  mu << 0.5, -1.0;
  ThetaVector theta = make_theta(g, mu);
  Rng rng(7);
  const int n = 10000;
  Dataset big = sample_dataset(g, theta, n, rng, XDist::StdNormal, n);
  Vec mean = big.x.colwise().sum() / double(n);
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(mean[j] - mu[j]) < 4.0 / std::sqrt(double(n)));

  ModelSpec c = lc(2, 2);
  ThetaVector w0 = make_theta(c, Vec::Zero(4));
  Dataset dc = sample_dataset(c, w0, n, rng, XDist::StdNormal, n);
  double frac1 = 0.0;
  for (int i = 0; i < n; ++i) frac1 += dc.y_class[i];
  frac1 /= n;
  CHECK(std::abs(frac1 - 0.5) < 4.0 * std::sqrt(0.25 / n));

  Dataset none = sample_dataset(g, theta, 0, rng);
  CHECK(none.n_active == 0);
  CHECK(none.x.cwiseAbs().maxCoeff() == 0.0);
  for (auto m : none.obs_mask) CHECK(m == 0);

  CHECK_THROWS_AS(sample_dataset(g, theta, 129, rng, XDist::StdNormal, 128),
                  ValidationError);
}

TEST_CASE("predict_mode examples and errors") {
  ModelSpec l = lr(1);
  Vec wb(2);
  wb << 2.0, 1.0;
  Vec x(1);
  x << 3.0;
  CHECK(predict_mode(l, make_theta(l, wb), x) == doctest::Approx(7.0));

  ModelSpec c = lc(1, 2);
  Vec w(2);
  w << 0.3, 0.9;  // class 1 logit larger for x > 0
  Vec xc(1);
  xc << 1.0;
  CHECK(predict_mode(c, make_theta(c, w), xc) == doctest::Approx(1.0));

  ModelSpec n = nlr(2, 1);
  Vec theta = Vec::Zero(theta_dim(n));
  theta[theta_dim(n) - 1] = 0.37;  // output bias is the last entry
  Vec xn(2);
  xn << 5.0, -3.0;
  CHECK(predict_mode(n, make_theta(n, theta), xn) == doctest::Approx(0.37));

  ModelSpec g = gm(2);
  CHECK_THROWS_AS(predict_mode(g, make_theta(g, Vec::Zero(2)), Vec::Zero(2)),
                  ValidationError);
}

TEST_CASE("log_likelihood is bit-identical under observation permutation") {
  Rng rng(21);
  for (const ModelSpec& spec : {gm(3), lr(3), lc(2, 3), nlr(2, 1), gmm(2, 2)}) {
    ThetaVector theta = sample_theta(spec, rng);
    Dataset d = sample_dataset(spec, theta, 9, rng, XDist::StdNormal, 16);
    const double base = log_likelihood(spec, theta, d);

    Dataset p = d;
    std::vector<int> order{8, 3, 5, 0, 7, 1, 6, 2, 4};
    for (int i = 0; i < 9; ++i) {
      p.x.row(i) = d.x.row(order[i]);
      if (spec.is_regression()) p.y[i] = d.y[order[i]];
      if (spec.is_classification()) p.y_class[i] = d.y_class[order[i]];
    }
    CHECK(log_likelihood(spec, theta, p) == base);
  }
}

TEST_CASE("log_likelihood ignores padded content once re-zeroed") {
  Rng rng(31);
  ModelSpec spec = lr(3);
  ThetaVector theta = sample_theta(spec, rng);
  Dataset d = sample_dataset(spec, theta, 6, rng, XDist::StdNormal, 12);
  const double base = log_likelihood(spec, theta, d);

  Dataset scribbled = d;
  for (int i = 6; i < 12; ++i) {
    for (int j = 0; j < 3; ++j) scribbled.x(i, j) = 123.0 + i + j;
    scribbled.y[i] = -9.0;
  }
  for (int i = 6; i < 12; ++i) {
    for (int j = 0; j < 3; ++j) scribbled.x(i, j) = 0.0;
    scribbled.y[i] = 0.0;
  }
  CHECK(log_likelihood(spec, theta, scribbled) == base);

  Dataset bad = d;
  bad.x(7, 0) = 1.0;
  CHECK_THROWS_AS(log_likelihood(spec, theta, bad), ValidationError);
}

TEST_CASE("GM log_joint gradient matches the closed form") {
  Rng rng(55);
  ModelSpec spec = gm(3);
  ThetaVector theta = sample_theta(spec, rng);
  Dataset d = sample_dataset(spec, theta, 11, rng, XDist::StdNormal, 16);

  Tape tape;
  Var tv = tape.leaf(theta.values.transpose(), true);
  Var lj = log_joint_t(tape, spec, tv, d);
  tape.backward(tape.sum_all(lj));
  Vec analytic = tape.grad(tv).row(0).transpose();

  Vec expected = Vec::Zero(3);
  for (int i = 0; i < 11; ++i) expected += d.x.row(i).transpose();
  expected -= (11.0 + 1.0) * theta.values;
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(analytic[j] - expected[j]) /
              std::max(1.0, std::abs(expected[j])) <
          1e-6);
}

TEST_CASE("GMM with identical clusters collapses to a single Gaussian") {
  Rng rng(66);
  ModelSpec m = gmm(2, 3);
  ModelSpec g = gm(2);
  Vec mu = rng.normal_vec(2);
  Vec stacked(6);
  stacked << mu, mu, mu;
  ThetaVector tm = make_theta(m, stacked);
  ThetaVector tg = make_theta(g, mu);
  Dataset d = sample_dataset(g, tg, 8, rng, XDist::StdNormal, 8);
  CHECK(log_likelihood(m, tm, d) ==
        doctest::Approx(log_likelihood(g, tg, d)).epsilon(1e-12));
}

TEST_CASE("temperature scaling moves the likelihood but never the mode") {
  Rng rng(77);
  ModelSpec c = lc(3, 4);
  ThetaVector theta = sample_theta(c, rng);
  Dataset d = sample_dataset(c, theta, 10, rng, XDist::StdNormal, 10);
  ModelSpec hot = c;
  hot.tau = 1.7;
  CHECK(log_likelihood(c, theta, d) != log_likelihood(hot, theta, d));
  for (int i = 0; i < 10; ++i) {
    Vec x = d.x.row(i).transpose();
    CHECK(predict_mode(c, theta, x) == predict_mode(hot, theta, x));
  }
}

TEST_CASE("class index out of range is rejected") {
  ModelSpec c = lc(1, 2);
  Dataset d = single_obs(c, {0.5}, 0.0, 1);
  d.y_class[0] = 2;
  ThetaVector theta = make_theta(c, Vec::Zero(2));
  CHECK_THROWS_AS(log_likelihood(c, theta, d), ValidationError);
}

TEST_CASE("tape likelihood agrees with the plain evaluator") {
  Rng rng(88);
  for (const ModelSpec& spec :
       {gm(3), gmm(2, 3), lr(4), lc(3, 3), nlr(2, 2, Activation::Tanh),
        nlc(2, 1, 3)}) {
    for (int rep = 0; rep < 3; ++rep) {
      ThetaVector theta = sample_theta(spec, rng);
      Dataset d = sample_dataset(spec, theta, 7, rng, XDist::StdNormal, 12);
      Mat thetas(2, theta_dim(spec));
      thetas.row(0) = theta.values.transpose();
      thetas.row(1) = sample_theta(spec, rng).values.transpose();

      Tape tape;
      Var tv = tape.leaf(thetas, false);
      Var ll = log_likelihood_t(tape, spec, tv, d);
      Vec plain = log_likelihood_rows(spec, thetas, d);
      for (int m = 0; m < 2; ++m)
        CHECK(tape.val(ll)(m, 0) == doctest::Approx(plain[m]).epsilon(1e-12));
    }
  }
}

TEST_CASE("log_joint gradients verify by finite differences for every family") {
  Rng rng(101);
  for (const ModelSpec& spec :
       {gm(2), gmm(2, 2), lr(3), lc(2, 3), nlr(2, 1, Activation::Tanh),
        nlc(2, 1, 2)}) {
    ThetaVector theta = sample_theta(spec, rng);
    Dataset d = sample_dataset(spec, theta, 6, rng, XDist::StdNormal, 8);
    ParamStore ps;
    ps.add("theta", theta.values.transpose());
    auto loss = [&](ParamStore& p, Grads* out) {
      Tape tape;
      Var tv = tape.leaf(p.value("theta"), true);
      Var lj = log_joint_t(tape, spec, tv, d);
      Var l = tape.sum_all(lj);
      if (out) {
        tape.backward(l);
        out->g[0] += tape.grad(tv);
      }
      return tape.scalar(l);
    };
    GradReport report = check_gradients(loss, ps, 1e-5);
    CHECK(report.worst < 1e-6);
  }
}
