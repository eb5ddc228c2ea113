#pragma once

#include "gem/mesh.hpp"

namespace gem {

// Baseline layers operate on untyped per-vertex features (V x c matrices).

// out(p) = W^T . mean over N(p) of f(q).
MatX isotropic_conv(const MatX& field, const NeighborGraph& graph,
                    const MatX& W);

struct IsotropicGrad {
  MatX dfield;
  MatX dW;
};
IsotropicGrad isotropic_conv_backward(const MatX& field,
                                      const NeighborGraph& graph,
                                      const MatX& W, const MatX& dout);

// Scalar score per neighbor, softmax over the neighborhood, broadcast over
// channels: out(p) = W^T (1/|N|) sum_q a_q f(q), a = softmax((f(q)-f(p)).w).
MatX attention_conv(const MatX& field, const NeighborGraph& graph,
                    const MatX& W, const VecX& w);

// The softmax weights of one vertex's neighborhood (they sum to 1).
VecX attention_weights(const MatX& field, const NeighborGraph& graph,
                       const VecX& w, Index p);

struct AttentionGrad {
  MatX dfield;
  MatX dW;
  VecX dw;
};
AttentionGrad attention_conv_backward(const MatX& field,
                                      const NeighborGraph& graph,
                                      const MatX& W, const VecX& w,
                                      const MatX& dout);

// Two-layer perceptron (c_in + 3) -> hidden -> c_out with ReLU.
struct Mlp {
  MatX W1;  // in x hidden
  VecX b1;
  MatX W2;  // hidden x out
  VecX b2;
};

// Componentwise max over neighbors of theta([f(q); x_q - x_p]). Ties take
// the first neighbor in adjacency order.
MatX pointnet_message(const MatX& field, const NeighborGraph& graph,
                      const MatX& positions, const Mlp& theta);

struct PointnetGrad {
  MatX dfield;
  Mlp dtheta;
};
PointnetGrad pointnet_message_backward(const MatX& field,
                                       const NeighborGraph& graph,
                                       const MatX& positions, const Mlp& theta,
                                       const MatX& dout);

}  // namespace gem
