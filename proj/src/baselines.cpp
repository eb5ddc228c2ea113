#include "gem/baselines.hpp"

#include <cmath>

namespace gem {

MatX isotropic_conv(const MatX& field, const NeighborGraph& graph,
                    const MatX& W) {
  if (field.cols() != W.rows())
    throw SignatureMismatch("isotropic_conv: channel count != W rows");
  if (field.rows() != graph.vertex_count())
    throw ShapeMismatch("isotropic_conv: field/graph size mismatch");
  const Index n = field.rows();
  MatX out = MatX::Zero(n, W.cols());
  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    if (nb.empty()) throw EmptyNeighborhood("isotropic_conv: vertex " +
                                            std::to_string(p));
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(field.cols());
    for (Index q : nb) mean += field.row(q);
    out.row(p) = (mean / static_cast<double>(nb.size())) * W;
  }
  return out;
}

IsotropicGrad isotropic_conv_backward(const MatX& field,
                                      const NeighborGraph& graph,
                                      const MatX& W, const MatX& dout) {
  IsotropicGrad grad{MatX::Zero(field.rows(), field.cols()),
                     MatX::Zero(W.rows(), W.cols())};
  for (Index p = 0; p < field.rows(); ++p) {
    const auto& nb = graph.neighbors(p);
    const double inv = 1.0 / static_cast<double>(nb.size());
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(field.cols());
    for (Index q : nb) mean += field.row(q);
    mean *= inv;
    grad.dW += mean.transpose() * dout.row(p);
    const Eigen::RowVectorXd dmean = dout.row(p) * W.transpose();
    for (Index q : nb) grad.dfield.row(q) += inv * dmean;
  }
  return grad;
}

VecX attention_weights(const MatX& field, const NeighborGraph& graph,
                       const VecX& w, Index p) {
  const auto& nb = graph.neighbors(p);
  if (nb.empty())
    throw EmptyNeighborhood("attention_conv: vertex " + std::to_string(p));
  VecX scores(nb.size());
  for (std::size_t j = 0; j < nb.size(); ++j)
    scores[j] = (field.row(nb[j]) - field.row(p)).dot(w.transpose());
  const double m = scores.maxCoeff();
  VecX a = (scores.array() - m).exp();
  return a / a.sum();
}

MatX attention_conv(const MatX& field, const NeighborGraph& graph,
                    const MatX& W, const VecX& w) {
  if (field.cols() != W.rows() || field.cols() != w.size())
    throw SignatureMismatch("attention_conv: channel mismatch");
  const Index n = field.rows();
  MatX out = MatX::Zero(n, W.cols());
  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    const VecX a = attention_weights(field, graph, w, p);
    Eigen::RowVectorXd y = Eigen::RowVectorXd::Zero(field.cols());
    for (std::size_t j = 0; j < nb.size(); ++j) y += a[j] * field.row(nb[j]);
    out.row(p) = (y / static_cast<double>(nb.size())) * W;
  }
  return out;
}

AttentionGrad attention_conv_backward(const MatX& field,
                                      const NeighborGraph& graph,
                                      const MatX& W, const VecX& w,
                                      const MatX& dout) {
  AttentionGrad grad{MatX::Zero(field.rows(), field.cols()),
                     MatX::Zero(W.rows(), W.cols()), VecX::Zero(w.size())};
  for (Index p = 0; p < field.rows(); ++p) {
    const auto& nb = graph.neighbors(p);
    const double inv = 1.0 / static_cast<double>(nb.size());
    const VecX a = attention_weights(field, graph, w, p);
    Eigen::RowVectorXd y = Eigen::RowVectorXd::Zero(field.cols());
    for (std::size_t j = 0; j < nb.size(); ++j) y += a[j] * field.row(nb[j]);
    y *= inv;
    grad.dW += y.transpose() * dout.row(p);
    const Eigen::RowVectorXd dy = dout.row(p) * W.transpose();
    // softmax jacobian: ds_j = a_j (da_j - sum_r a_r da_r)
    VecX da(nb.size());
    for (std::size_t j = 0; j < nb.size(); ++j)
      da[j] = inv * field.row(nb[j]).dot(dy);
    const double mix = a.dot(da);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const double ds = a[j] * (da[j] - mix);
      grad.dfield.row(nb[j]) += inv * a[j] * dy + ds * w.transpose();
      grad.dfield.row(p) -= ds * w.transpose();
      grad.dw += ds * (field.row(nb[j]) - field.row(p)).transpose();
    }
  }
  return grad;
}

namespace {

void check_mlp(const Mlp& theta, Index in_dim) {
  if (theta.W1.rows() != in_dim || theta.b1.size() != theta.W1.cols() ||
      theta.W2.rows() != theta.W1.cols() ||
      theta.b2.size() != theta.W2.cols())
    throw ShapeMismatch("pointnet_message: mlp shape mismatch");
}

}  // namespace

MatX pointnet_message(const MatX& field, const NeighborGraph& graph,
                      const MatX& positions, const Mlp& theta) {
  check_mlp(theta, field.cols() + 3);
  const Index n = field.rows();
  if (positions.rows() != n || graph.vertex_count() != n)
    throw ShapeMismatch("pointnet_message: size mismatch");
  const Index c_out = theta.W2.cols();
  MatX out(n, c_out);
  VecX z(field.cols() + 3);
  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    if (nb.empty())
      throw EmptyNeighborhood("pointnet_message: vertex " + std::to_string(p));
    bool first = true;
    for (Index q : nb) {
      z.head(field.cols()) = field.row(q).transpose();
      z.tail(3) = (positions.row(q) - positions.row(p)).transpose();
      const VecX h = (theta.W1.transpose() * z + theta.b1).cwiseMax(0.0);
      const VecX o = theta.W2.transpose() * h + theta.b2;
      if (first) {
        out.row(p) = o.transpose();
        first = false;
      } else {
        out.row(p) = out.row(p).cwiseMax(o.transpose());
      }
    }
  }
  return out;
}

PointnetGrad pointnet_message_backward(const MatX& field,
                                       const NeighborGraph& graph,
                                       const MatX& positions, const Mlp& theta,
                                       const MatX& dout) {
  check_mlp(theta, field.cols() + 3);
  const Index n = field.rows();
  const Index c_out = theta.W2.cols();
  PointnetGrad grad{MatX::Zero(n, field.cols()),
                    {MatX::Zero(theta.W1.rows(), theta.W1.cols()),
                     VecX::Zero(theta.b1.size()),
                     MatX::Zero(theta.W2.rows(), theta.W2.cols()),
                     VecX::Zero(theta.b2.size())}};
  VecX z(field.cols() + 3);
  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    // recompute the winner per output channel (strict >, first wins ties)
    MatX vals(nb.size(), c_out);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      z.head(field.cols()) = field.row(nb[j]).transpose();
      z.tail(3) = (positions.row(nb[j]) - positions.row(p)).transpose();
      const VecX h = (theta.W1.transpose() * z + theta.b1).cwiseMax(0.0);
      vals.row(j) = (theta.W2.transpose() * h + theta.b2).transpose();
    }
    std::vector<Index> winner(c_out, 0);
    for (Index k = 0; k < c_out; ++k)
      for (std::size_t j = 1; j < nb.size(); ++j)
        if (vals(j, k) > vals(winner[k], k)) winner[k] = static_cast<Index>(j);
    // route each channel's gradient through its winning neighbor
    for (std::size_t j = 0; j < nb.size(); ++j) {
      VecX dmax = VecX::Zero(c_out);
      bool any = false;
      for (Index k = 0; k < c_out; ++k)
        if (winner[k] == static_cast<Index>(j) && dout(p, k) != 0.0) {
          dmax[k] = dout(p, k);
          any = true;
        }
      if (!any) continue;
      z.head(field.cols()) = field.row(nb[j]).transpose();
      z.tail(3) = (positions.row(nb[j]) - positions.row(p)).transpose();
      const VecX pre = theta.W1.transpose() * z + theta.b1;
      const VecX h = pre.cwiseMax(0.0);
      grad.dtheta.b2 += dmax;
      grad.dtheta.W2 += h * dmax.transpose();
      VecX dh = theta.W2 * dmax;
      for (Index i = 0; i < dh.size(); ++i)
        if (pre[i] <= 0.0) dh[i] = 0.0;
      grad.dtheta.b1 += dh;
      grad.dtheta.W1 += z * dh.transpose();
      const VecX dz = theta.W1 * dh;
      grad.dfield.row(nb[j]) += dz.head(field.cols()).transpose();
      // position offsets are inputs, not parameters; their gradient is
      // dropped
    }
  }
  return grad;
}

}  // namespace gem
