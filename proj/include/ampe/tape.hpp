#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ampe/common.hpp"

namespace ampe {

// Reverse-mode autodiff over matrix-valued nodes. A Tape owns the whole
// computation for one loss evaluation; Vars are indices into it. The op set
// is exactly what the encoders, heads and model likelihoods need -- this is
// not a general tensor library.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  enum class Op : uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,            // elementwise
    ScalMul,        // value * d0
    ScalAdd,        // value + d0
    MatMulNN,       // A * B
    MatMulNT,       // A * B^T
    MatMulTN,       // A^T * B
    AddRow,         // A (n x m) + broadcast row b (1 x m)
    MulRow,         // A (n x m) .* broadcast row b (1 x m)
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Square,
    AtanClamp,      // d0 * (2/pi) * atan(a / d0)
    ClampHard,      // clamp to [d0, d1]; zero gradient outside
    SumAll,         // 1 x 1
    RowSum,         // n x m -> n x 1
    RowLse,         // n x m -> n x 1 log-sum-exp per row
    SoftmaxRows,
    LayerNormRows,  // per-row (x - mean) / sqrt(var + d0)
    SliceRows,      // rows [i0, i0+i1)
    SliceCols,      // cols [i0, i0+i1)
    ConcatRows,
    ConcatCols,
    GatherCols,     // columns picked by index list
    PickPerRow,     // out(i,0) = A(i, idx[i])
    ReshapeRows,    // 1 x (r*c) -> r x c, row-major
    Transpose,
  };

  Var leaf(Mat value, bool requires_grad) {
    return push(Op::Leaf, -1, -1, std::move(value), requires_grad);
  }
  Var constant(Mat value) { return leaf(std::move(value), false); }
  Var constant_scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

  Var add(Var a, Var b) { return binary(Op::Add, a, b, val(a) + val(b)); }
  Var sub(Var a, Var b) { return binary(Op::Sub, a, b, val(a) - val(b)); }
  Var mul(Var a, Var b) {
    return binary(Op::Mul, a, b, val(a).cwiseProduct(val(b)));
  }
  Var scal_mul(Var a, double s) {
    Var v = unary(Op::ScalMul, a, val(a) * s);
    node(v).d0 = s;
    return v;
  }
  Var scal_add(Var a, double s) {
    Var v = unary(Op::ScalAdd, a, val(a).array() + s);
    node(v).d0 = s;
    return v;
  }
  Var neg(Var a) { return scal_mul(a, -1.0); }

  Var matmul(Var a, Var b) { return binary(Op::MatMulNN, a, b, val(a) * val(b)); }
  Var matmul_nt(Var a, Var b) {
    return binary(Op::MatMulNT, a, b, val(a) * val(b).transpose());
  }
  Var matmul_tn(Var a, Var b) {
    return binary(Op::MatMulTN, a, b, val(a).transpose() * val(b));
  }

  Var add_row(Var a, Var row) {
    const Mat& r = val(row);
    return binary(Op::AddRow, a, row, val(a).rowwise() + r.row(0));
  }
  Var mul_row(Var a, Var row) {
    const Mat& r = val(row);
    Mat out = val(a).array().rowwise() * r.row(0).array();
    return binary(Op::MulRow, a, row, std::move(out));
  }

  Var relu(Var a) { return unary(Op::Relu, a, val(a).cwiseMax(0.0)); }
  Var tanh(Var a) { return unary(Op::Tanh, a, val(a).array().tanh()); }
  Var sigmoid(Var a) {
    Mat out = (1.0 / (1.0 + (-val(a).array()).exp()));
    return unary(Op::Sigmoid, a, std::move(out));
  }
  Var exp(Var a) { return unary(Op::Exp, a, val(a).array().exp()); }
  Var log(Var a) { return unary(Op::Log, a, val(a).array().log()); }
  Var square(Var a) { return unary(Op::Square, a, val(a).array().square()); }

  Var atan_clamp(Var a, double c) {
    Mat out = c * (2.0 / EIGEN_PI) * (val(a).array() / c).atan();
    Var v = unary(Op::AtanClamp, a, std::move(out));
    node(v).d0 = c;
    return v;
  }
  Var clamp_hard(Var a, double lo, double hi) {
    Var v = unary(Op::ClampHard, a, val(a).array().max(lo).min(hi));
    node(v).d0 = lo;
    node(v).d1 = hi;
    return v;
  }

  Var sum_all(Var a) {
    return unary(Op::SumAll, a, Mat::Constant(1, 1, val(a).sum()));
  }
  Var row_sum(Var a) {
    Mat out = val(a).rowwise().sum();
    return unary(Op::RowSum, a, std::move(out));
  }
  Var row_lse(Var a) {
    const Mat& m = val(a);
    Mat out(m.rows(), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      double mx = m.row(i).maxCoeff();
      out(i, 0) = mx + std::log((m.row(i).array() - mx).exp().sum());
    }
    return unary(Op::RowLse, a, std::move(out));
  }
  Var softmax_rows(Var a) {
    const Mat& m = val(a);
    Mat out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      Eigen::ArrayXd e = (m.row(i).array() - m.row(i).maxCoeff()).exp();
      out.row(i) = (e / e.sum()).matrix();
    }
    return unary(Op::SoftmaxRows, a, std::move(out));
  }
  Var layer_norm_rows(Var a, double eps = 1e-5) {
    const Mat& m = val(a);
    Mat out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      double mean = m.row(i).mean();
      double var = (m.row(i).array() - mean).square().mean();
      out.row(i) = ((m.row(i).array() - mean) / std::sqrt(var + eps)).matrix();
    }
    Var v = unary(Op::LayerNormRows, a, std::move(out));
    node(v).d0 = eps;
    return v;
  }

  Var slice_rows(Var a, int first, int count) {
    Var v = unary(Op::SliceRows, a, val(a).middleRows(first, count));
    node(v).i0 = first;
    node(v).i1 = count;
    return v;
  }
  Var slice_cols(Var a, int first, int count) {
    Var v = unary(Op::SliceCols, a, val(a).middleCols(first, count));
    node(v).i0 = first;
    node(v).i1 = count;
    return v;
  }
  Var concat_rows(Var a, Var b) {
    Mat out(val(a).rows() + val(b).rows(), val(a).cols());
    out << val(a), val(b);
    return binary(Op::ConcatRows, a, b, std::move(out));
  }
  Var concat_cols(Var a, Var b) {
    Mat out(val(a).rows(), val(a).cols() + val(b).cols());
    out << val(a), val(b);
    return binary(Op::ConcatCols, a, b, std::move(out));
  }

  Var gather_cols(Var a, std::vector<int> idx) {
    const Mat& m = val(a);
    Mat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j) out.col(j) = m.col(idx[j]);
    Var v = unary(Op::GatherCols, a, std::move(out));
    node(v).pool = static_cast<int>(index_pool_.size());
    index_pool_.push_back(std::move(idx));
    return v;
  }
  Var pick_per_row(Var a, std::vector<int> idx) {
    const Mat& m = val(a);
    Mat out(m.rows(), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, 0) = m(i, idx[i]);
    Var v = unary(Op::PickPerRow, a, std::move(out));
    node(v).pool = static_cast<int>(index_pool_.size());
    index_pool_.push_back(std::move(idx));
    return v;
  }
  Var reshape_rows(Var a, int rows, int cols) {
    const Mat& m = val(a);
    Mat out(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out(i, j) = m(0, i * cols + j);
    Var v = unary(Op::ReshapeRows, a, std::move(out));
    node(v).i0 = rows;
    node(v).i1 = cols;
    return v;
  }
  Var transpose(Var a) { return unary(Op::Transpose, a, val(a).transpose()); }

  const Mat& val(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }

  // Accumulated gradient of the last backward() pass; zero matrix when the
  // node was never reached.
  const Mat& grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad_set) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.grad_set = true;
    }
    return n.grad;
  }

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1;
    double d0 = 0.0, d1 = 0.0;
    int i0 = 0, i1 = 0;
    int pool = -1;
    bool requires_grad = false;
    bool grad_set = false;
    Mat value;
    Mat grad;
  };

  Node& node(Var v) { return nodes_[v.id]; }

  Var push(Op op, int a, int b, Mat value, bool requires_grad) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var unary(Op op, Var a, Mat value) {
    return push(op, a.id, -1, std::move(value), nodes_[a.id].requires_grad);
  }
  Var binary(Op op, Var a, Var b, Mat value) {
    bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return push(op, a.id, b.id, std::move(value), rg);
  }

  Mat& grad_buf(int id) {
    Node& n = nodes_[id];
    if (!n.grad_set) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.grad_set = true;
    }
    return n.grad;
  }

  void accumulate(int parent, const Mat& g) {
    if (parent < 0 || !nodes_[parent].requires_grad) return;
    grad_buf(parent) += g;
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<int>> index_pool_;

  friend class TapeBackward;
};

}  // namespace ampe
