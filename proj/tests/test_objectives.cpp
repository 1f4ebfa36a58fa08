#include <doctest.h>

#include "ampe/baselines.hpp"
#include "ampe/objectives.hpp"

using namespace ampe;

namespace {

ModelSpec gm1() {
  ModelSpec s;
  s.family = Family::GM;
  s.d_max = 1;
  return s;
}

EncoderConfig tiny_transformer() {
  EncoderConfig e;
  e.kind = EncoderKind::Transformer;
  e.summary_dim = 8;
  e.transformer = {1, 8, 16, 2};
  return e;
}

HeadConfig gaussian_head() {
  HeadConfig h;
  h.kind = HeadKind::DiagGaussian;
  h.gaussian.hidden = 12;
  return h;
}

GeneratorConfig small_gen(int batch, int n_lo, int n_hi) {
  GeneratorConfig g;
  g.batch_size = batch;
  g.n_lo = n_lo;
  g.n_hi = n_hi;
  g.n_max = n_hi;
  return g;
}

}  // namespace

TEST_CASE("warmup_beta endpoints and monotonicity") {
  CHECK(warmup_beta(0, 100) == 0.0);
  CHECK(warmup_beta(100, 100) == 1.0);
  CHECK(warmup_beta(50, 100) == 0.5);
  CHECK(warmup_beta(500, 100) == 1.0);
  CHECK(warmup_beta(0, 0) == 1.0);
  double prev = -1.0;
  for (long it = 0; it < 250; it += 10) {
    double b = warmup_beta(it, 200);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("reverse KL with the exact posterior equals the negated evidence") {
  // With q equal to the conjugate posterior, log q - log p(D, theta) is
  // -log p(D) pointwise, so the Monte Carlo estimate is exact for any M.
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(6, 8, 16);
  DatasetBatch batch = generate_batch(gen, spec, Rng(3).fork("train"));

  CallbackGaussianPosterior q(1, [&](const Dataset& d) {
    GaussianDist g = analytic_posterior_gm(spec, d);
    return CallbackGaussianPosterior::MeanCov{g.mean, g.cov};
  });
  const double loss = reverse_kl_value(q, spec, batch, 1.0, 8, Rng(5));
  double expected = 0.0;
  for (const Dataset& d : batch.datasets) expected -= log_evidence_gm(spec, d);
  expected /= static_cast<double>(batch.datasets.size());
  CHECK(loss == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("reverse KL at beta=0 keeps only the likelihood term") {
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(3, 6, 6);
  DatasetBatch batch = generate_batch(gen, spec, Rng(7).fork("train"));

  // A near-point-mass q makes the likelihood term deterministic.
  CallbackGaussianPosterior q(1, [&](const Dataset& d) {
    GaussianDist g = analytic_posterior_gm(spec, d);
    return CallbackGaussianPosterior::MeanCov{g.mean, Mat::Constant(1, 1, 1e-20)};
  });
  const double loss = reverse_kl_value(q, spec, batch, 0.0, 4, Rng(9));
  double expected = 0.0;
  for (const Dataset& d : batch.datasets) {
    GaussianDist g = analytic_posterior_gm(spec, d);
    expected -= log_likelihood(spec, make_theta(spec, g.mean), d);
  }
  expected /= static_cast<double>(batch.datasets.size());
  CHECK(loss == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("reverse KL on empty datasets with q = prior vanishes") {
  ModelSpec spec = gm1();
  DatasetBatch batch;
  for (int i = 0; i < 3; ++i) {
    Dataset d;
    d.x = Mat::Zero(4, 1);
    d.obs_mask.assign(4, 0);
    d.feat_mask.assign(1, 1);
    d.n_active = 0;
    d.d_active = 1;
    batch.datasets.push_back(d);
  }
  PriorPosterior q(spec);
  const double loss = reverse_kl_value(q, spec, batch, 1.0, 16, Rng(11));
  CHECK(std::abs(loss) < 1e-12);
}

TEST_CASE("forward KL with a forced head hits the density at the mean") {
  ModelSpec spec;
  spec.family = Family::GM;
  spec.d_max = 2;
  GeneratorConfig gen = small_gen(1, 5, 5);
  DatasetBatch batch = generate_batch(gen, spec, Rng(13).fork("train"));

  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 17);
  // Zero the head MLP so mu and log_sigma are exactly the output biases.
  est.params().value("head.W1").setZero();
  est.params().value("head.b1").setZero();
  est.params().value("head.Wmu").setZero();
  est.params().value("head.Wls").setZero();
  est.params().value("head.bls").setZero();
  est.params().value("head.bmu") = batch.thetas[0].values.transpose();

  const double loss = forward_kl_loss(est, batch, nullptr);
  CHECK(loss == doctest::Approx(0.5 * 2 * kLog2Pi).epsilon(1e-10));

  est.params().value("head.bls").setConstant(std::log(2.0));
  const double wider = forward_kl_loss(est, batch, nullptr);
  CHECK(wider - loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("forward KL rejects batches without generating parameters") {
  ModelSpec spec;
  spec.family = Family::LR;
  spec.d_max = 1;
  GeneratorConfig gen = small_gen(2, 5, 5);
  gen.source = Source::GpRbf;
  gen.dim = 1;
  DatasetBatch batch = generate_batch(gen, spec, Rng(19));
  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 23);
  CHECK_THROWS_AS(forward_kl_loss(est, batch, nullptr), ValidationError);
}

TEST_CASE("elbo: exact posterior evaluates to the evidence; any q stays below") {
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(1, 10, 10);
  DatasetBatch batch = generate_batch(gen, spec, Rng(29).fork("train"));
  const Dataset& d = batch.datasets[0];
  const double evidence = log_evidence_gm(spec, d);

  CallbackGaussianPosterior exact(1, [&](const Dataset& dd) {
    GaussianDist g = analytic_posterior_gm(spec, dd);
    return CallbackGaussianPosterior::MeanCov{g.mean, g.cov};
  });
  Rng r1(31);
  CHECK(elbo_estimate(exact, spec, d, 64, r1) ==
        doctest::Approx(evidence).epsilon(1e-10));

  PriorPosterior prior_q(spec);
  Rng r2(37);
  double se = 0.0;
  const double elbo = elbo_estimate(prior_q, spec, d, 10000, r2, &se);
  CHECK(elbo <= evidence + 3.0 * se);
  CHECK(elbo < evidence);  // strictly below for a mismatched q

  Rng r3(41), r4(41);
  CHECK(elbo_estimate(prior_q, spec, d, 1, r3) ==
        elbo_estimate(prior_q, spec, d, 1, r4));
}

TEST_CASE("tape loss values agree with the abstract-model path") {
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(5, 6, 12);
  DatasetBatch batch = generate_batch(gen, spec, Rng(43).fork("train"));
  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 47);
  EstimatorPosterior q(est);

  for (double beta : {0.0, 0.35, 1.0}) {
    const double tape_loss = reverse_kl_loss(est, batch, beta, 2, Rng(53), nullptr);
    const double plain_loss = reverse_kl_value(q, spec, batch, beta, 2, Rng(53));
    CHECK(tape_loss == doctest::Approx(plain_loss).epsilon(1e-9));
  }
  CHECK(forward_kl_loss(est, batch, nullptr) ==
        doctest::Approx(forward_kl_value(q, batch)).epsilon(1e-9));
}

TEST_CASE("loss evaluation is deterministic under threading") {
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(32, 6, 12);
  DatasetBatch batch = generate_batch(gen, spec, Rng(59).fork("train"));
  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 61);
  Grads g1 = est.params().zero_grads();
  Grads g2 = est.params().zero_grads();
  const double l1 = reverse_kl_loss(est, batch, 0.7, 1, Rng(67), &g1);
  const double l2 = reverse_kl_loss(est, batch, 0.7, 1, Rng(67), &g2);
  CHECK(l1 == l2);
  for (size_t i = 0; i < g1.g.size(); ++i) CHECK(g1.g[i] == g2.g[i]);
}

TEST_CASE("both losses pass end-to-end gradient verification") {
  ModelSpec spec;
  spec.family = Family::GM;
  spec.d_max = 2;  // theta_dim 2
  GeneratorConfig gen = small_gen(2, 4, 6);
  DatasetBatch batch = generate_batch(gen, spec, Rng(71).fork("train"));
  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 73);

  // The verified functional is a scalar multiple of the loss; the scale
  // keeps central differences above the double-precision rounding floor
  // without changing the relative gradient structure.
  const double scale = 0.02;
  auto rkl = [&](ParamStore& p, Grads* out) {
    AmortizedEstimator view(spec, est.encoder(), est.head(), p);
    double loss = reverse_kl_loss(view, batch, 0.8, 2, Rng(79), out);
    if (out) out->scale(scale);
    return scale * loss;
  };
  GradReport r1 = check_gradients(rkl, est.params(), 1e-3);
  CHECK(r1.worst < 1e-4);

  auto fkl = [&](ParamStore& p, Grads* out) {
    AmortizedEstimator view(spec, est.encoder(), est.head(), p);
    double loss = forward_kl_loss(view, batch, out);
    if (out) out->scale(scale);
    return scale * loss;
  };
  GradReport r2 = check_gradients(fkl, est.params(), 1e-3);
  CHECK(r2.worst < 1e-4);
}

TEST_CASE("forward KL is permutation invariant for set encoders") {
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(3, 8, 8);
  DatasetBatch batch = generate_batch(gen, spec, Rng(83).fork("train"));
  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 89);
  const double base = forward_kl_loss(est, batch, nullptr);

  DatasetBatch permuted = batch;
  Rng rng(97);
  for (Dataset& d : permuted.datasets) {
    Dataset orig = d;
    std::vector<int> order(8);
    for (int i = 0; i < 8; ++i) order[i] = i;
    for (int i = 7; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    for (int i = 0; i < 8; ++i) d.x.row(i) = orig.x.row(order[i]);
  }
  CHECK(std::abs(forward_kl_loss(est, permuted, nullptr) - base) < 1e-5);
}

TEST_CASE("train: zero iterations, determinism, loss trend, divergence") {
  ModelSpec spec = gm1();
  GeneratorConfig gen = small_gen(16, 8, 16);
  TrainConfig cfg;
  cfg.objective = Objective::ReverseKl;
  cfg.iterations = 0;
  cfg.warmup_iters = 0;
  cfg.lr = 3e-3;
  cfg.seed = 5;

  AmortizedEstimator est(spec, tiny_transformer(), gaussian_head(), 5);
  const uint64_t before = est.params().content_hash();
  train(est, gen, cfg);
  CHECK(est.params().content_hash() == before);

  cfg.iterations = 60;
  cfg.warmup_iters = 15;
  auto run_trace = [&] {
    AmortizedEstimator e(spec, tiny_transformer(), gaussian_head(), 5);
    return train(e, gen, cfg);
  };
  std::vector<TraceEntry> t1 = run_trace();
  std::vector<TraceEntry> t2 = run_trace();
  CHECK(t1.size() == 60);
  for (size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].loss == t2[i].loss);

  double head_mean = 0.0, tail_mean = 0.0;
  for (int i = 0; i < 10; ++i) head_mean += t1[i].loss / 10.0;
  for (int i = 50; i < 60; ++i) tail_mean += t1[i].loss / 10.0;
  CHECK(tail_mean < head_mean);

  TrainConfig bad = cfg;
  bad.iterations = 10;
  bad.warmup_iters = 0;
  HeadConfig flow_head;
  flow_head.kind = HeadKind::Flow;
  flow_head.flow.blocks = 2;
  flow_head.flow.subnet_hidden = 8;
  AmortizedEstimator doomed(spec, tiny_transformer(), flow_head, 5);
  // An actnorm scale this large overflows exp() on the first evaluation.
  doomed.params().value("flow.b0.logs").setConstant(1000.0);
  try {
    train(doomed, gen, bad);
    CHECK(false);
  } catch (const DivergenceError& e) {
    CHECK(e.iteration == 0);
  }
}
