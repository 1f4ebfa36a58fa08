#include "ampe/heads.hpp"

#include <cmath>

namespace ampe {

std::string head_name(HeadKind k) {
  return k == HeadKind::DiagGaussian ? "diag_gaussian" : "flow";
}

HeadKind head_from_name(const std::string& s) {
  if (s == "diag_gaussian") return HeadKind::DiagGaussian;
  if (s == "flow") return HeadKind::Flow;
  throw ValidationError("unknown head kind: " + s);
}

void HeadConfig::validate() const {
  require(gaussian.hidden >= 1, "head.gaussian.hidden must be >= 1");
  require(gaussian.log_sigma_lo < gaussian.log_sigma_hi,
          "head.gaussian: log_sigma bounds out of order");
  require(flow.blocks >= 1, "head.flow.blocks must be >= 1");
  require(flow.subnet_hidden >= 1, "head.flow.subnet_hidden must be >= 1");
  require(flow.clamp > 0.0, "head.flow.clamp must be > 0");
}

namespace {

int cond_dim(int k) { return k == 1 ? 0 : (k + 1) / 2; }

// Broadcast a 1 x d row to M rows; gradients flow back to the row.
Var rep_rows(Tape& tape, Var row, int M) {
  if (M == 1) return row;
  return tape.matmul(tape.constant(Mat::Ones(M, 1)), row);
}

Var std_normal_logpdf_rows(Tape& tape, Var z, int k) {
  return tape.scal_add(tape.scal_mul(tape.row_sum(tape.square(z)), -0.5),
                       -0.5 * k * kLog2Pi);
}

}  // namespace

void init_head_params(ParamStore& ps, const HeadConfig& cfg, int summary_dim,
                      int theta_dim, Rng& rng) {
  cfg.validate();
  if (cfg.kind == HeadKind::DiagGaussian) {
    const int h = cfg.gaussian.hidden;
    ps.add("head.W1", xavier_init(h, summary_dim, rng));
    ps.add("head.b1", Mat::Zero(1, h));
    ps.add("head.Wmu", xavier_init(theta_dim, h, rng));
    ps.add("head.bmu", Mat::Zero(1, theta_dim));
    ps.add("head.Wls", xavier_init(theta_dim, h, rng));
    ps.add("head.bls", Mat::Zero(1, theta_dim));
    return;
  }
  const int k = theta_dim;
  const int c = cond_dim(k);
  const int p = k - c;
  for (int b = 0; b < cfg.flow.blocks; ++b) {
    const std::string s = "flow.b" + std::to_string(b);
    ps.add(s + ".logs", Mat::Zero(1, k));
    ps.add(s + ".t", Mat::Zero(1, k));
    ps.add(s + ".W1", xavier_init(cfg.flow.subnet_hidden, c + summary_dim, rng));
    ps.add(s + ".b1", Mat::Zero(1, cfg.flow.subnet_hidden));
    // Zeroed output layer makes every block start as the identity map.
    ps.add(s + ".W2", Mat::Zero(2 * p, cfg.flow.subnet_hidden));
    ps.add(s + ".b2", Mat::Zero(1, 2 * p));
    std::vector<int64_t>& perm = ps.constant(s + ".perm");
    perm.resize(k);
    std::vector<int> order(k);
    for (int i = 0; i < k; ++i) order[i] = i;
    Rng pr = rng.fork("perm").fork(static_cast<uint64_t>(b));
    for (int i = k - 1; i > 0; --i) std::swap(order[i], order[pr.uniform_int(0, i)]);
    for (int i = 0; i < k; ++i) perm[i] = order[i];
  }
}

GaussianMoments gaussian_moments(Tape& tape, const BoundParams& bp,
                                 const GaussianHeadConfig& cfg, Var summary,
                                 int theta_dim) {
  (void)theta_dim;
  Var h = tape.relu(tape.add_row(tape.matmul_nt(summary, bp["head.W1"]), bp["head.b1"]));
  GaussianMoments m;
  m.mu = tape.add_row(tape.matmul_nt(h, bp["head.Wmu"]), bp["head.bmu"]);
  m.log_sigma =
      tape.clamp_hard(tape.add_row(tape.matmul_nt(h, bp["head.Wls"]), bp["head.bls"]),
                      cfg.log_sigma_lo, cfg.log_sigma_hi);
  return m;
}

Reparam reparam_gaussian(Tape& tape, Var mu, Var sigma, int M, Rng& rng) {
  const int k = static_cast<int>(tape.val(mu).cols());
  Reparam out;
  out.eps = rng.normal_mat(M, k);
  Var eps = tape.constant(out.eps);
  out.theta = tape.add_row(tape.mul_row(eps, sigma), mu);
  return out;
}

HeadSample gaussian_sample_logq(Tape& tape, const GaussianMoments& m, int M,
                                Rng& rng) {
  const int k = static_cast<int>(tape.val(m.mu).cols());
  Var sigma = tape.exp(m.log_sigma);
  Reparam rep = reparam_gaussian(tape, m.mu, sigma, M, rng);
  const Mat eps_sq_sum = rep.eps.rowwise().squaredNorm();
  HeadSample out;
  out.thetas = rep.theta;
  // log q = -k/2 log(2 pi) - sum_j log sigma_j - 1/2 sum_j eps_j^2
  Var base = tape.constant((-0.5 * eps_sq_sum.array() - 0.5 * k * kLog2Pi).matrix());
  out.log_q = tape.add_row(base, tape.neg(tape.sum_all(m.log_sigma)));
  return out;
}

Var gaussian_logq(Tape& tape, const GaussianMoments& m, const Mat& thetas) {
  const int k = static_cast<int>(tape.val(m.mu).cols());
  Var diff = tape.add_row(tape.constant(thetas), tape.neg(m.mu));
  Var z = tape.mul_row(diff, tape.exp(tape.neg(m.log_sigma)));
  Var base = tape.scal_add(tape.scal_mul(tape.row_sum(tape.square(z)), -0.5),
                           -0.5 * k * kLog2Pi);
  return tape.add_row(base, tape.neg(tape.sum_all(m.log_sigma)));
}

namespace {

struct BlockRefs {
  Var logs, t, W1, b1, W2, b2;
  const std::vector<int64_t>* perm;
};

BlockRefs block_refs(const BoundParams& bp, const ParamStore& ps, int b) {
  const std::string s = "flow.b" + std::to_string(b);
  BlockRefs r;
  r.logs = bp[s + ".logs"];
  r.t = bp[s + ".t"];
  r.W1 = bp[s + ".W1"];
  r.b1 = bp[s + ".b1"];
  r.W2 = bp[s + ".W2"];
  r.b2 = bp[s + ".b2"];
  r.perm = &ps.constants().at(s + ".perm");
  return r;
}

// Subnet output (s_raw, shift) for the passive half.
std::pair<Var, Var> coupling_subnet(Tape& tape, const BlockRefs& r, Var cond,
                                    Var summary_rep, int p) {
  Var inp = cond.valid() ? tape.concat_cols(cond, summary_rep) : summary_rep;
  Var h = tape.relu(tape.add_row(tape.matmul_nt(inp, r.W1), r.b1));
  Var out = tape.add_row(tape.matmul_nt(h, r.W2), r.b2);
  return {tape.slice_cols(out, 0, p), tape.slice_cols(out, p, p)};
}

}  // namespace

FlowResult flow_forward(Tape& tape, const BoundParams& bp, const ParamStore& ps,
                        const FlowHeadConfig& cfg, Var z, Var summary) {
  const int M = static_cast<int>(tape.val(z).rows());
  const int k = static_cast<int>(tape.val(z).cols());
  const int c = cond_dim(k);
  const int p = k - c;
  Var summary_rep = rep_rows(tape, summary, M);
  Var u = z;
  Var ld = tape.constant(Mat::Zero(M, 1));
  for (int b = 0; b < cfg.blocks; ++b) {
    BlockRefs r = block_refs(bp, ps, b);
    u = tape.add_row(tape.mul_row(u, tape.exp(r.logs)), r.t);
    ld = tape.add_row(ld, tape.sum_all(r.logs));
    std::vector<int> perm(r.perm->begin(), r.perm->end());
    u = tape.gather_cols(u, perm);
    Var cond = c > 0 ? tape.slice_cols(u, 0, c) : Var{};
    Var passive = tape.slice_cols(u, c, p);
    auto [s_raw, shift] = coupling_subnet(tape, r, cond, summary_rep, p);
    Var s = tape.atan_clamp(s_raw, cfg.clamp);
    Var transformed = tape.add(tape.mul(passive, tape.exp(s)), shift);
    u = c > 0 ? tape.concat_cols(cond, transformed) : transformed;
    ld = tape.add(ld, tape.row_sum(s));
  }
  return {u, ld};
}

FlowResult flow_inverse(Tape& tape, const BoundParams& bp, const ParamStore& ps,
                        const FlowHeadConfig& cfg, const Mat& thetas, Var summary) {
  const int M = static_cast<int>(thetas.rows());
  const int k = static_cast<int>(thetas.cols());
  const int c = cond_dim(k);
  const int p = k - c;
  Var summary_rep = rep_rows(tape, summary, M);
  Var u = tape.constant(thetas);
  Var ld = tape.constant(Mat::Zero(M, 1));
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    BlockRefs r = block_refs(bp, ps, b);
    Var cond = c > 0 ? tape.slice_cols(u, 0, c) : Var{};
    Var passive = tape.slice_cols(u, c, p);
    auto [s_raw, shift] = coupling_subnet(tape, r, cond, summary_rep, p);
    Var s = tape.atan_clamp(s_raw, cfg.clamp);
    Var restored = tape.mul(tape.sub(passive, shift), tape.exp(tape.neg(s)));
    u = c > 0 ? tape.concat_cols(cond, restored) : restored;
    ld = tape.sub(ld, tape.row_sum(s));
    std::vector<int> inv(k);
    for (int i = 0; i < k; ++i) inv[(*r.perm)[i]] = i;
    u = tape.gather_cols(u, inv);
    u = tape.mul_row(tape.add_row(u, tape.neg(r.t)), tape.exp(tape.neg(r.logs)));
    ld = tape.add_row(ld, tape.neg(tape.sum_all(r.logs)));
  }
  return {u, ld};
}

HeadSample flow_sample_logq(Tape& tape, const BoundParams& bp, const ParamStore& ps,
                            const FlowHeadConfig& cfg, Var summary, int theta_dim,
                            int M, Rng& rng) {
  Mat z_val = rng.normal_mat(M, theta_dim);
  Mat base_logp =
      (-0.5 * z_val.rowwise().squaredNorm().array() - 0.5 * theta_dim * kLog2Pi)
          .matrix();
  Var z = tape.constant(std::move(z_val));
  FlowResult fwd = flow_forward(tape, bp, ps, cfg, z, summary);
  HeadSample out;
  out.thetas = fwd.out;
  out.log_q = tape.sub(tape.constant(base_logp), fwd.log_det);
  return out;
}

Var flow_logq(Tape& tape, const BoundParams& bp, const ParamStore& ps,
              const FlowHeadConfig& cfg, Var summary, const Mat& thetas) {
  FlowResult inv = flow_inverse(tape, bp, ps, cfg, thetas, summary);
  const int k = static_cast<int>(thetas.cols());
  return tape.add(std_normal_logpdf_rows(tape, inv.out, k), inv.log_det);
}

}  // namespace ampe
