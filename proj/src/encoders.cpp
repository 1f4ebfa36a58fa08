#include "ampe/encoders.hpp"

#include <cmath>

namespace ampe {

std::string encoder_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::Transformer: return "transformer";
    case EncoderKind::DeepSets: return "deepsets";
    case EncoderKind::Gru: return "gru";
  }
  return "?";
}

EncoderKind encoder_from_name(const std::string& s) {
  if (s == "transformer") return EncoderKind::Transformer;
  if (s == "deepsets") return EncoderKind::DeepSets;
  if (s == "gru") return EncoderKind::Gru;
  throw ValidationError("unknown encoder kind: " + s);
}

void EncoderConfig::validate() const {
  require(summary_dim >= 1, "encoder.summary_dim must be >= 1");
  switch (kind) {
    case EncoderKind::Transformer:
      require(transformer.layers >= 1 && transformer.model_dim >= 1 &&
                  transformer.ff_dim >= 1 && transformer.heads >= 1,
              "encoder.transformer: widths must be >= 1");
      require(transformer.model_dim % transformer.heads == 0,
              "encoder.transformer: model_dim must be divisible by heads");
      require(summary_dim == transformer.model_dim,
              "encoder.summary_dim must equal transformer.model_dim");
      break;
    case EncoderKind::DeepSets:
      require(deepsets.embed_layers >= 1 && deepsets.regress_layers >= 1 &&
                  deepsets.hidden >= 1,
              "encoder.deepsets: widths must be >= 1");
      break;
    case EncoderKind::Gru:
      require(gru.layers >= 1 && gru.hidden >= 1, "encoder.gru: widths must be >= 1");
      require(summary_dim == gru.hidden,
              "encoder.summary_dim must equal gru.hidden");
      break;
  }
}

int token_dim(const ModelSpec& spec) {
  int y_dim = 0;
  if (spec.is_regression()) y_dim = 1;
  if (spec.is_classification()) y_dim = spec.n_classes;
  return 2 * spec.d_max + y_dim;
}

Mat tokenize(const Dataset& data, const ModelSpec& spec) {
  validate_dataset(spec, data);
  const auto rows = data.active_rows();
  const int t = token_dim(spec);
  Mat tokens(static_cast<Eigen::Index>(rows.size()), t);
  for (size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    Eigen::Index c = 0;
    for (int j = 0; j < spec.d_max; ++j)
      tokens(i, c++) = data.feat_mask[j] ? data.x(r, j) : 0.0;
    if (spec.is_regression()) tokens(i, c++) = data.y[r];
    if (spec.is_classification())
      for (int k = 0; k < spec.n_classes; ++k)
        tokens(i, c++) = data.y_class[r] == k ? 1.0 : 0.0;
    for (int j = 0; j < spec.d_max; ++j)
      tokens(i, c++) = data.feat_mask[j] ? 1.0 : 0.0;
  }
  return tokens;
}

namespace {

std::string pname(const std::string& scope, int idx, const std::string& leaf) {
  return scope + "." + std::to_string(idx) + "." + leaf;
}

void add_linear(ParamStore& ps, const std::string& prefix, int out, int in, Rng& rng) {
  ps.add(prefix + ".W", xavier_init(out, in, rng));
  ps.add(prefix + ".b", Mat::Zero(1, out));
}

// y = x * W^T + b for row-major batches.
Var linear(Tape& tape, const BoundParams& bp, const std::string& prefix, Var x) {
  return tape.add_row(tape.matmul_nt(x, bp[prefix + ".W"]), bp[prefix + ".b"]);
}

void init_transformer(ParamStore& ps, const TransformerConfig& cfg, int t, Rng& rng) {
  const int m = cfg.model_dim;
  add_linear(ps, "enc.embed", m, t, rng);
  ps.add("enc.cls", xavier_init(1, m, rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string s = "enc.l" + std::to_string(l);
    ps.add(s + ".ln1.g", Mat::Ones(1, m));
    ps.add(s + ".ln1.b", Mat::Zero(1, m));
    add_linear(ps, s + ".q", m, m, rng);
    add_linear(ps, s + ".k", m, m, rng);
    add_linear(ps, s + ".v", m, m, rng);
    add_linear(ps, s + ".o", m, m, rng);
    ps.add(s + ".ln2.g", Mat::Ones(1, m));
    ps.add(s + ".ln2.b", Mat::Zero(1, m));
    add_linear(ps, s + ".ff1", cfg.ff_dim, m, rng);
    add_linear(ps, s + ".ff2", m, cfg.ff_dim, rng);
  }
  ps.add("enc.lnf.g", Mat::Ones(1, m));
  ps.add("enc.lnf.b", Mat::Zero(1, m));
}

Var layer_norm(Tape& tape, const BoundParams& bp, const std::string& prefix, Var x) {
  return tape.add_row(tape.mul_row(tape.layer_norm_rows(x), bp[prefix + ".g"]),
                      bp[prefix + ".b"]);
}

Var encode_transformer(Tape& tape, const BoundParams& bp, const TransformerConfig& cfg,
                       Var tokens) {
  const int m = cfg.model_dim;
  const int dk = m / cfg.heads;
  Var x = tape.concat_rows(bp["enc.cls"], linear(tape, bp, "enc.embed", tokens));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string s = "enc.l" + std::to_string(l);
    Var a = layer_norm(tape, bp, s + ".ln1", x);
    Var q = linear(tape, bp, s + ".q", a);
    Var k = linear(tape, bp, s + ".k", a);
    Var v = linear(tape, bp, s + ".v", a);
    Var heads_out;
    for (int h = 0; h < cfg.heads; ++h) {
      Var qh = tape.slice_cols(q, h * dk, dk);
      Var kh = tape.slice_cols(k, h * dk, dk);
      Var vh = tape.slice_cols(v, h * dk, dk);
      Var scores = tape.scal_mul(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dk)));
      Var oh = tape.matmul(tape.softmax_rows(scores), vh);
      heads_out = h == 0 ? oh : tape.concat_cols(heads_out, oh);
    }
    x = tape.add(x, linear(tape, bp, s + ".o", heads_out));
    Var f = layer_norm(tape, bp, s + ".ln2", x);
    f = linear(tape, bp, s + ".ff2", tape.relu(linear(tape, bp, s + ".ff1", f)));
    x = tape.add(x, f);
  }
  x = layer_norm(tape, bp, "enc.lnf", x);
  return tape.slice_rows(x, 0, 1);
}

void init_deepsets(ParamStore& ps, const DeepSetsConfig& cfg, int t, int summary_dim,
                   Rng& rng) {
  int in = t;
  for (int l = 0; l < cfg.embed_layers; ++l) {
    add_linear(ps, pname("enc.embed", l, "lin"), cfg.hidden, in, rng);
    in = cfg.hidden;
  }
  for (int l = 0; l < cfg.regress_layers; ++l)
    add_linear(ps, pname("enc.regress", l, "lin"), cfg.hidden, cfg.hidden, rng);
  add_linear(ps, "enc.readout", summary_dim, cfg.hidden, rng);
}

Var encode_deepsets(Tape& tape, const BoundParams& bp, const DeepSetsConfig& cfg,
                    Var tokens) {
  Var h = tokens;
  for (int l = 0; l < cfg.embed_layers; ++l)
    h = tape.relu(linear(tape, bp, pname("enc.embed", l, "lin"), h));
  const auto n = tape.val(h).rows();
  // Masked mean: inactive tokens were dropped at tokenization, so this is a
  // plain mean over the n_active embeddings.
  Var pooled = tape.scal_mul(
      tape.matmul(tape.constant(Mat::Ones(1, n)), h), 1.0 / static_cast<double>(n));
  for (int l = 0; l < cfg.regress_layers; ++l)
    pooled = tape.relu(linear(tape, bp, pname("enc.regress", l, "lin"), pooled));
  return linear(tape, bp, "enc.readout", pooled);
}

void init_gru(ParamStore& ps, const GruConfig& cfg, int t, Rng& rng) {
  int in = t;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string s = "enc.gru" + std::to_string(l);
    ps.add(s + ".Wi", xavier_init(3 * cfg.hidden, in, rng));
    ps.add(s + ".Wh", xavier_init(3 * cfg.hidden, cfg.hidden, rng));
    ps.add(s + ".bi", Mat::Zero(1, 3 * cfg.hidden));
    ps.add(s + ".bh", Mat::Zero(1, 3 * cfg.hidden));
    in = cfg.hidden;
  }
}

// Standard GRU cell; gate order (r, z, n) within the stacked weights.
Var gru_cell(Tape& tape, const BoundParams& bp, const std::string& s, int hidden,
             Var x, Var h) {
  Var gi = tape.add_row(tape.matmul_nt(x, bp[s + ".Wi"]), bp[s + ".bi"]);
  Var gh = tape.add_row(tape.matmul_nt(h, bp[s + ".Wh"]), bp[s + ".bh"]);
  Var r = tape.sigmoid(tape.add(tape.slice_cols(gi, 0, hidden),
                                tape.slice_cols(gh, 0, hidden)));
  Var z = tape.sigmoid(tape.add(tape.slice_cols(gi, hidden, hidden),
                                tape.slice_cols(gh, hidden, hidden)));
  Var n = tape.tanh(tape.add(tape.slice_cols(gi, 2 * hidden, hidden),
                             tape.mul(r, tape.slice_cols(gh, 2 * hidden, hidden))));
  // h' = (1 - z) .* n + z .* h
  return tape.add(tape.sub(n, tape.mul(z, n)), tape.mul(z, h));
}

Var encode_gru(Tape& tape, const BoundParams& bp, const GruConfig& cfg, Var tokens) {
  const int n = static_cast<int>(tape.val(tokens).rows());
  std::vector<Var> h(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l)
    h[l] = tape.constant(Mat::Zero(1, cfg.hidden));
  for (int i = 0; i < n; ++i) {
    Var x = tape.slice_rows(tokens, i, 1);
    for (int l = 0; l < cfg.layers; ++l) {
      h[l] = gru_cell(tape, bp, "enc.gru" + std::to_string(l), cfg.hidden, x, h[l]);
      x = h[l];
    }
  }
  return h[cfg.layers - 1];
}

}  // namespace

void init_encoder_params(ParamStore& ps, const EncoderConfig& cfg, int t, Rng& rng) {
  cfg.validate();
  switch (cfg.kind) {
    case EncoderKind::Transformer:
      init_transformer(ps, cfg.transformer, t, rng);
      break;
    case EncoderKind::DeepSets:
      init_deepsets(ps, cfg.deepsets, t, cfg.summary_dim, rng);
      break;
    case EncoderKind::Gru:
      init_gru(ps, cfg.gru, t, rng);
      break;
  }
}

Var encode(Tape& tape, const BoundParams& bp, const EncoderConfig& cfg,
           const ModelSpec& spec, const Dataset& data) {
  Mat tokens = tokenize(data, spec);
  require(tokens.rows() >= 1, "encode: dataset has no active observations");
  Var tok = tape.constant(std::move(tokens));
  switch (cfg.kind) {
    case EncoderKind::Transformer:
      return encode_transformer(tape, bp, cfg.transformer, tok);
    case EncoderKind::DeepSets:
      return encode_deepsets(tape, bp, cfg.deepsets, tok);
    case EncoderKind::Gru:
      return encode_gru(tape, bp, cfg.gru, tok);
  }
  return Var{};
}

long encoder_param_count(const EncoderConfig& cfg, int t) {
  ParamStore ps;
  Rng rng(0);
  init_encoder_params(ps, cfg, t, rng);
  return ps.num_scalars();
}

}  // namespace ampe
