#include "ampe/tape.hpp"

namespace ampe {

void Tape::backward(Var loss) {
  require(loss.valid() && loss.id < static_cast<int>(nodes_.size()),
          "backward: invalid loss node");
  require(nodes_[loss.id].value.size() == 1,
          "backward: loss must be a scalar node");
  grad_buf(loss.id)(0, 0) = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.grad_set) continue;
    const Mat& g = n.grad;
    const int a = n.a, b = n.b;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(a, g);
        accumulate(b, g);
        break;
      case Op::Sub:
        accumulate(a, g);
        if (b >= 0 && nodes_[b].requires_grad) grad_buf(b) -= g;
        break;
      case Op::Mul:
        if (nodes_[a].requires_grad)
          grad_buf(a) += g.cwiseProduct(nodes_[b].value);
        if (nodes_[b].requires_grad)
          grad_buf(b) += g.cwiseProduct(nodes_[a].value);
        break;
      case Op::ScalMul:
        if (nodes_[a].requires_grad) grad_buf(a) += n.d0 * g;
        break;
      case Op::ScalAdd:
        accumulate(a, g);
        break;
      case Op::MatMulNN:
        if (nodes_[a].requires_grad)
          grad_buf(a).noalias() += g * nodes_[b].value.transpose();
        if (nodes_[b].requires_grad)
          grad_buf(b).noalias() += nodes_[a].value.transpose() * g;
        break;
      case Op::MatMulNT:
        if (nodes_[a].requires_grad) grad_buf(a).noalias() += g * nodes_[b].value;
        if (nodes_[b].requires_grad)
          grad_buf(b).noalias() += g.transpose() * nodes_[a].value;
        break;
      case Op::MatMulTN:
        if (nodes_[a].requires_grad)
          grad_buf(a).noalias() += nodes_[b].value * g.transpose();
        if (nodes_[b].requires_grad)
          grad_buf(b).noalias() += nodes_[a].value * g;
        break;
      case Op::AddRow:
        accumulate(a, g);
        if (nodes_[b].requires_grad) grad_buf(b) += g.colwise().sum();
        break;
      case Op::MulRow:
        if (nodes_[a].requires_grad)
          grad_buf(a) +=
              (g.array().rowwise() * nodes_[b].value.row(0).array()).matrix();
        if (nodes_[b].requires_grad)
          grad_buf(b) += g.cwiseProduct(nodes_[a].value).colwise().sum();
        break;
      case Op::Relu:
        if (nodes_[a].requires_grad)
          grad_buf(a) +=
              (nodes_[a].value.array() > 0.0).cast<double>().matrix().cwiseProduct(g);
        break;
      case Op::Tanh:
        if (nodes_[a].requires_grad)
          grad_buf(a) += ((1.0 - n.value.array().square()) * g.array()).matrix();
        break;
      case Op::Sigmoid:
        if (nodes_[a].requires_grad)
          grad_buf(a) +=
              (n.value.array() * (1.0 - n.value.array()) * g.array()).matrix();
        break;
      case Op::Exp:
        if (nodes_[a].requires_grad) grad_buf(a) += n.value.cwiseProduct(g);
        break;
      case Op::Log:
        if (nodes_[a].requires_grad)
          grad_buf(a) += (g.array() / nodes_[a].value.array()).matrix();
        break;
      case Op::Square:
        if (nodes_[a].requires_grad)
          grad_buf(a) += (2.0 * nodes_[a].value.array() * g.array()).matrix();
        break;
      case Op::AtanClamp:
        if (nodes_[a].requires_grad) {
          double c = n.d0;
          grad_buf(a) +=
              ((2.0 / EIGEN_PI) /
               (1.0 + (nodes_[a].value.array() / c).square()) * g.array())
                  .matrix();
        }
        break;
      case Op::ClampHard:
        if (nodes_[a].requires_grad) {
          const auto& x = nodes_[a].value.array();
          grad_buf(a) += ((x >= n.d0 && x <= n.d1).cast<double>() * g.array()).matrix();
        }
        break;
      case Op::SumAll:
        if (nodes_[a].requires_grad)
          grad_buf(a).array() += g(0, 0);
        break;
      case Op::RowSum:
        if (nodes_[a].requires_grad)
          grad_buf(a) += g.col(0).replicate(1, nodes_[a].value.cols());
        break;
      case Op::RowLse:
        if (nodes_[a].requires_grad) {
          Mat& ga = grad_buf(a);
          const Mat& x = nodes_[a].value;
          for (Eigen::Index i = 0; i < x.rows(); ++i)
            ga.row(i) +=
                g(i, 0) * (x.row(i).array() - n.value(i, 0)).exp().matrix();
        }
        break;
      case Op::SoftmaxRows:
        if (nodes_[a].requires_grad) {
          Mat& ga = grad_buf(a);
          for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            double dot = g.row(i).dot(n.value.row(i));
            ga.row(i) += (n.value.row(i).array() * (g.row(i).array() - dot)).matrix();
          }
        }
        break;
      case Op::LayerNormRows:
        if (nodes_[a].requires_grad) {
          Mat& ga = grad_buf(a);
          const Mat& x = nodes_[a].value;
          const double eps = n.d0;
          for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double mean = x.row(i).mean();
            double var = (x.row(i).array() - mean).square().mean();
            double inv = 1.0 / std::sqrt(var + eps);
            double gmean = g.row(i).mean();
            double gydot = g.row(i).cwiseProduct(n.value.row(i)).mean();
            ga.row(i) += (inv * (g.row(i).array() - gmean -
                                 n.value.row(i).array() * gydot))
                             .matrix();
          }
        }
        break;
      case Op::SliceRows:
        if (nodes_[a].requires_grad) grad_buf(a).middleRows(n.i0, n.i1) += g;
        break;
      case Op::SliceCols:
        if (nodes_[a].requires_grad) grad_buf(a).middleCols(n.i0, n.i1) += g;
        break;
      case Op::ConcatRows:
        if (nodes_[a].requires_grad)
          grad_buf(a) += g.topRows(nodes_[a].value.rows());
        if (nodes_[b].requires_grad)
          grad_buf(b) += g.bottomRows(nodes_[b].value.rows());
        break;
      case Op::ConcatCols:
        if (nodes_[a].requires_grad)
          grad_buf(a) += g.leftCols(nodes_[a].value.cols());
        if (nodes_[b].requires_grad)
          grad_buf(b) += g.rightCols(nodes_[b].value.cols());
        break;
      case Op::GatherCols:
        if (nodes_[a].requires_grad) {
          Mat& ga = grad_buf(a);
          const std::vector<int>& idx = index_pool_[n.pool];
          for (size_t j = 0; j < idx.size(); ++j)
            ga.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
        }
        break;
      case Op::PickPerRow:
        if (nodes_[a].requires_grad) {
          Mat& ga = grad_buf(a);
          const std::vector<int>& idx = index_pool_[n.pool];
          for (Eigen::Index i = 0; i < g.rows(); ++i) ga(i, idx[i]) += g(i, 0);
        }
        break;
      case Op::ReshapeRows:
        if (nodes_[a].requires_grad) {
          Mat& ga = grad_buf(a);
          for (int i = 0; i < n.i0; ++i)
            for (int j = 0; j < n.i1; ++j) ga(0, i * n.i1 + j) += g(i, j);
        }
        break;
      case Op::Transpose:
        if (nodes_[a].requires_grad) grad_buf(a) += g.transpose();
        break;
    }
  }
}

}  // namespace ampe
