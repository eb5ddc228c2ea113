#pragma once

#include "gem/gauge.hpp"
#include "gem/irrep.hpp"
#include "gem/kernel_basis.hpp"
#include "gem/mesh.hpp"

namespace gem {

// Weights of one gauge-equivariant convolution: one coefficient matrix
// (mult_out x mult_in) per kernel-basis element, for every ordered pair of
// (input entry, output entry). Pair index = out_entry * in_entries + in_entry.
struct GemConvWeights {
  struct PairWeights {
    std::vector<MatX> elems;
  };
  IrrepSignature in_sig;
  IrrepSignature out_sig;
  std::vector<PairWeights> neighbor;
  std::vector<PairWeights> self;

  std::size_t pair_index(std::size_t in_entry, std::size_t out_entry) const {
    return out_entry * in_sig.entries().size() + in_entry;
  }
};

// Zero-initialised weights with the shapes demanded by the two signatures.
GemConvWeights make_conv_weights(const IrrepSignature& in_sig,
                                 const IrrepSignature& out_sig,
                                 const KernelBasisSet& bases);

// Per-edge evaluation of every neighbor basis element at that edge's log
// angle. Layout per pair (m_in, m_out): elems x d_out x d_in doubles.
class EdgeBasisCache {
 public:
  static EdgeBasisCache build(const NeighborGraph& graph,
                              const GaugeAtlas& atlas,
                              const KernelBasisSet& bases);

  const double* pair_data(Index p, std::size_t j, int m_in, int m_out) const {
    return eval_[p][j].data() + offset_[m_out * (max_order_ + 1) + m_in];
  }
  int max_order() const { return max_order_; }

 private:
  int max_order_ = 0;
  std::vector<int> offset_;
  std::vector<std::vector<std::vector<double>>> eval_;
};

// out(p) = K_self f(p) + (1/|N(p)|) sum_q K(theta_pq) rho(g_{q->p}) f(q).
IrrepField gem_conv(const IrrepField& field, const NeighborGraph& graph,
                    const GaugeAtlas& atlas, const KernelBasisSet& bases,
                    const GemConvWeights& weights,
                    const EdgeBasisCache* cache = nullptr);

struct GemConvGrad {
  IrrepField dfield;
  GemConvWeights dweights;
};

// Reverse-mode gradients of gem_conv for an upstream gradient dout
// (V x out_dim, laid out like the forward output's values).
GemConvGrad gem_conv_backward(const IrrepField& field,
                              const NeighborGraph& graph,
                              const GaugeAtlas& atlas,
                              const KernelBasisSet& bases,
                              const GemConvWeights& weights, const MatX& dout,
                              const EdgeBasisCache* cache = nullptr);

// Pointwise ReLU in the regular representation: sample the band-limited
// angular function at N equispaced angles, rectify, project back.
IrrepField regular_nonlinearity(const IrrepField& field, int N);
MatX regular_nonlinearity_backward(const IrrepField& field, int N,
                                   const MatX& dout);

// Batch statistics for the equivariant normalisation. Indexed per m=0 scalar
// channel (mean/var) and per m>=1 channel (mean norm), in signature order.
struct NormStats {
  VecX mean0, var0;  // m=0 channels
  VecX norm_m;       // m>=1 channels
};

NormStats compute_norm_stats(const std::vector<const IrrepField*>& batch,
                             double eps = 1e-5);

// m=0: (x - mean)/sqrt(var + eps); m>=1: x / (mean channel norm + eps).
IrrepField equivariant_norm(const IrrepField& field, const NormStats& stats,
                            double eps = 1e-5);

// Channel stacking with the per-order interleaving demanded by the merged
// signature.
IrrepField concat_fields(const IrrepField& a, const IrrepField& b);
// Splits an upstream gradient of concat(a, b) back into the two halves.
std::pair<MatX, MatX> split_concat_grad(const IrrepSignature& a,
                                        const IrrepSignature& b,
                                        const MatX& dout);

}  // namespace gem
