#include <doctest.h>

#include "ampe/encoders.hpp"

using namespace ampe;

namespace {

ModelSpec gm_spec(int d) {
  ModelSpec s;
  s.family = Family::GM;
  s.d_max = d;
  return s;
}

EncoderConfig tiny_transformer() {
  EncoderConfig e;
  e.kind = EncoderKind::Transformer;
  e.summary_dim = 8;
  e.transformer = {1, 8, 16, 2};
  return e;
}

EncoderConfig tiny_deepsets() {
  EncoderConfig e;
  e.kind = EncoderKind::DeepSets;
  e.summary_dim = 6;
  e.deepsets = {2, 2, 10};
  return e;
}

EncoderConfig tiny_gru() {
  EncoderConfig e;
  e.kind = EncoderKind::Gru;
  e.summary_dim = 7;
  e.gru = {2, 7};
  return e;
}

Dataset random_gm_dataset(const ModelSpec& spec, int n, int n_max, Rng& rng) {
  ThetaVector theta = sample_theta(spec, rng);
  return sample_dataset(spec, theta, n, rng, XDist::StdNormal, n_max);
}

Vec run_encoder(const EncoderConfig& cfg, const ModelSpec& spec,
                const ParamStore& ps, const Dataset& data) {
  Tape tape;
  BoundParams bp(tape, ps);
  Var s = encode(tape, bp, cfg, spec, data);
  return tape.val(s).row(0).transpose();
}

Dataset permute_active(const Dataset& d, const std::vector<int>& order) {
  Dataset p = d;
  for (size_t i = 0; i < order.size(); ++i) {
    p.x.row(static_cast<Eigen::Index>(i)) = d.x.row(order[i]);
    if (d.y.size() > 0) p.y[static_cast<Eigen::Index>(i)] = d.y[order[i]];
    if (!d.y_class.empty()) p.y_class[i] = d.y_class[order[i]];
  }
  return p;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  return order;
}

}  // namespace

TEST_CASE("tokenize: layout, masking, one-hot targets") {
  ModelSpec g = gm_spec(2);
  Dataset d;
  d.x = Mat::Zero(3, 2);
  d.x(0, 0) = 1.0;
  d.obs_mask = {1, 0, 0};
  d.feat_mask = {1, 1};
  d.n_active = 1;
  d.d_active = 2;
  Mat tokens = tokenize(d, g);
  CHECK(tokens.rows() == 1);  // masked rows never produce tokens
  CHECK(tokens.cols() == 4);
  CHECK(tokens(0, 0) == 1.0);
  CHECK(tokens(0, 1) == 0.0);
  CHECK(tokens(0, 2) == 1.0);
  CHECK(tokens(0, 3) == 1.0);

  ModelSpec c;
  c.family = Family::LC;
  c.d_max = 1;
  c.n_classes = 2;
  Dataset dc;
  dc.x = Mat::Zero(2, 1);
  dc.x(0, 0) = 0.5;
  dc.y_class = {1, 0};
  dc.obs_mask = {1, 0};
  dc.feat_mask = {1};
  dc.n_active = 1;
  dc.d_active = 1;
  Mat tc = tokenize(dc, c);
  CHECK(tc.cols() == 1 + 2 + 1);
  CHECK(tc(0, 1) == 0.0);  // one-hot of class 1
  CHECK(tc(0, 2) == 1.0);
}

TEST_CASE("transformer and deepsets summaries are permutation invariant") {
  Rng rng(19);
  ModelSpec spec = gm_spec(3);
  for (const EncoderConfig& cfg : {tiny_transformer(), tiny_deepsets()}) {
    ParamStore ps;
    Rng init = rng.fork(encoder_name(cfg.kind));
    init_encoder_params(ps, cfg, token_dim(spec), init);
    Dataset d = random_gm_dataset(spec, 12, 16, rng);
    Vec base = run_encoder(cfg, spec, ps, d);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      Dataset p = permute_active(d, random_permutation(12, rng));
      Vec s = run_encoder(cfg, spec, ps, p);
      worst = std::max(worst, (s - base).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("padded observations do not reach any encoder") {
  Rng rng(23);
  ModelSpec spec = gm_spec(2);
  for (const EncoderConfig& cfg : {tiny_transformer(), tiny_deepsets(), tiny_gru()}) {
    ParamStore ps;
    Rng init = rng.fork(encoder_name(cfg.kind));
    init_encoder_params(ps, cfg, token_dim(spec), init);
    Dataset d = random_gm_dataset(spec, 5, 8, rng);
    Vec base = run_encoder(cfg, spec, ps, d);

    // Same active rows inside a wider padded buffer.
    Dataset wider = d;
    wider.x = Mat::Zero(12, 2);
    wider.x.topRows(8) = d.x;
    wider.obs_mask.assign(12, 0);
    for (int i = 0; i < 5; ++i) wider.obs_mask[i] = 1;
    Vec s = run_encoder(cfg, spec, ps, wider);
    CHECK((s - base).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gru matches a hand-rolled single cell on one token") {
  Rng rng(29);
  ModelSpec spec = gm_spec(1);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::Gru;
  cfg.summary_dim = 3;
  cfg.gru = {1, 3};
  ParamStore ps;
  init_encoder_params(ps, cfg, token_dim(spec), rng);
  Dataset d = random_gm_dataset(spec, 1, 2, rng);
  Vec summary = run_encoder(cfg, spec, ps, d);

  Vec x = tokenize(d, spec).row(0).transpose();
  Vec gi = ps.value("enc.gru0.Wi") * x + ps.value("enc.gru0.bi").row(0).transpose();
  Vec gh = Vec(ps.value("enc.gru0.bh").row(0).transpose());  // h0 = 0
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Vec expect(3);
  for (int j = 0; j < 3; ++j) {
    double r = sigmoid(gi[j] + gh[j]);
    double z = sigmoid(gi[3 + j] + gh[3 + j]);
    double n = std::tanh(gi[6 + j] + r * gh[6 + j]);
    expect[j] = (1.0 - z) * n;  // + z * h0 with h0 = 0
  }
  CHECK((summary - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transformer matches a hand-rolled single-head layer") {
  Rng rng(31);
  ModelSpec spec = gm_spec(1);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::Transformer;
  cfg.summary_dim = 4;
  cfg.transformer = {1, 4, 8, 1};
  ParamStore ps;
  init_encoder_params(ps, cfg, token_dim(spec), rng);
  Dataset d = random_gm_dataset(spec, 2, 4, rng);
  Vec summary = run_encoder(cfg, spec, ps, d);

  auto linear = [&](const std::string& p, const Mat& x) {
    Mat out = x * ps.value(p + ".W").transpose();
    out.rowwise() += ps.value(p + ".b").row(0);
    return out;
  };
  auto layer_norm = [&](const std::string& p, Mat x) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mean = x.row(i).mean();
      double var = (x.row(i).array() - mean).square().mean();
      x.row(i) = ((x.row(i).array() - mean) / std::sqrt(var + 1e-5)).matrix();
    }
    x = (x.array().rowwise() * ps.value(p + ".g").row(0).array()).matrix();
    x.rowwise() += ps.value(p + ".b").row(0);
    return x;
  };
  Mat h = linear("enc.embed", tokenize(d, spec));
  Mat x(3, 4);
  x.row(0) = ps.value("enc.cls").row(0);
  x.bottomRows(2) = h;
  Mat a = layer_norm("enc.l0.ln1", x);
  Mat q = linear("enc.l0.q", a), k = linear("enc.l0.k", a), v = linear("enc.l0.v", a);
  Mat scores = q * k.transpose() / 2.0;  // sqrt(dk) with dk = 4
  Mat att(3, 3);
  for (int i = 0; i < 3; ++i) {
    Eigen::ArrayXd e = (scores.row(i).array() - scores.row(i).maxCoeff()).exp();
    att.row(i) = (e / e.sum()).matrix().transpose();
  }
  x += linear("enc.l0.o", att * v);
  Mat f = layer_norm("enc.l0.ln2", x);
  f = linear("enc.l0.ff1", f).cwiseMax(0.0);
  x += linear("enc.l0.ff2", f);
  Mat fin = layer_norm("enc.lnf", x);
  CHECK((summary - fin.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("deepsets: duplicating every token preserves the summary") {
  Rng rng(37);
  ModelSpec spec = gm_spec(2);
  EncoderConfig cfg = tiny_deepsets();
  ParamStore ps;
  init_encoder_params(ps, cfg, token_dim(spec), rng);
  Dataset d = random_gm_dataset(spec, 4, 8, rng);
  Dataset doubled = d;
  doubled.x = Mat::Zero(8, 2);
  doubled.x.topRows(4) = d.x.topRows(4);
  doubled.x.middleRows(4, 4) = d.x.topRows(4);
  doubled.obs_mask.assign(8, 1);
  doubled.n_active = 8;
  Vec a = run_encoder(cfg, spec, ps, d);
  Vec b = run_encoder(cfg, spec, ps, doubled);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("encoders error on a dataset with no active observations") {
  Rng rng(41);
  ModelSpec spec = gm_spec(1);
  Dataset empty;
  empty.x = Mat::Zero(3, 1);
  empty.obs_mask.assign(3, 0);
  empty.feat_mask.assign(1, 1);
  empty.n_active = 0;
  empty.d_active = 1;
  for (const EncoderConfig& cfg : {tiny_transformer(), tiny_deepsets(), tiny_gru()}) {
    ParamStore ps;
    Rng init = rng.fork(encoder_name(cfg.kind));
    init_encoder_params(ps, cfg, token_dim(spec), init);
    Tape tape;
    BoundParams bp(tape, ps);
    CHECK_THROWS_AS(encode(tape, bp, cfg, spec, empty), ValidationError);
  }
}

TEST_CASE("encoder gradients verify by finite differences") {
  Rng rng(43);
  ModelSpec spec = gm_spec(2);
  Dataset d = random_gm_dataset(spec, 4, 6, rng);
  for (const EncoderConfig& cfg : {tiny_transformer(), tiny_deepsets(), tiny_gru()}) {
    ParamStore ps;
    Rng init = rng.fork(encoder_name(cfg.kind));
    init_encoder_params(ps, cfg, token_dim(spec), init);
    // A random linear functional of the summary keeps the gradient well
    // conditioned for the finite-difference comparison.
    Rng wr = rng.fork("weights");
    const Mat weights = wr.normal_mat(1, cfg.summary_dim);
    auto loss = [&](ParamStore& p, Grads* out) {
      Tape tape;
      BoundParams bp(tape, p);
      Var s = encode(tape, bp, cfg, spec, d);
      Var l = tape.scal_mul(tape.sum_all(tape.mul(s, tape.constant(weights))), 0.1);
      if (out) {
        tape.backward(l);
        bp.accumulate_grads(tape, *out);
      }
      return tape.scalar(l);
    };
    GradReport report = check_gradients(loss, ps, 1e-4);
    CHECK(report.worst < 1e-4);
  }
}

TEST_CASE("deepsets and transformer reference sizes agree within 15%") {
  EncoderConfig tr;
  tr.kind = EncoderKind::Transformer;
  tr.summary_dim = 256;
  tr.transformer = {4, 256, 1024, 4};
  EncoderConfig ds;
  ds.kind = EncoderKind::DeepSets;
  ds.summary_dim = 256;
  ds.deepsets = {4, 4, 627};
  const int t = token_dim(gm_spec(2));
  const long a = encoder_param_count(tr, t);
  const long b = encoder_param_count(ds, t);
  CHECK(std::abs(double(a - b)) / double(std::max(a, b)) < 0.15);
}
