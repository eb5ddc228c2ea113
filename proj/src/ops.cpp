#include "gem/ops.hpp"

#include <cmath>

namespace gem {

namespace {

void check_weight_shapes(const GemConvWeights& w, const KernelBasisSet& bases) {
  const auto& in_entries = w.in_sig.entries();
  const auto& out_entries = w.out_sig.entries();
  if (w.neighbor.size() != in_entries.size() * out_entries.size() ||
      w.self.size() != w.neighbor.size())
    throw SignatureMismatch("gem_conv: weight pair count mismatch");
  for (std::size_t eo = 0; eo < out_entries.size(); ++eo)
    for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
      const auto& basis =
          bases.pair(in_entries[ei].order, out_entries[eo].order);
      const auto pi = w.pair_index(ei, eo);
      if (static_cast<int>(w.neighbor[pi].elems.size()) !=
              basis.neighbor_count() ||
          static_cast<int>(w.self[pi].elems.size()) != basis.self_count())
        throw SignatureMismatch("gem_conv: basis element count mismatch");
      for (const auto& list : {w.neighbor[pi].elems, w.self[pi].elems})
        for (const MatX& m : list)
          if (m.rows() != out_entries[eo].multiplicity ||
              m.cols() != in_entries[ei].multiplicity)
            throw SignatureMismatch("gem_conv: coefficient shape mismatch");
    }
}

}  // namespace

GemConvWeights make_conv_weights(const IrrepSignature& in_sig,
                                 const IrrepSignature& out_sig,
                                 const KernelBasisSet& bases) {
  GemConvWeights w;
  w.in_sig = in_sig;
  w.out_sig = out_sig;
  const auto& in_entries = in_sig.entries();
  const auto& out_entries = out_sig.entries();
  w.neighbor.resize(in_entries.size() * out_entries.size());
  w.self.resize(w.neighbor.size());
  for (std::size_t eo = 0; eo < out_entries.size(); ++eo)
    for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
      const auto& basis =
          bases.pair(in_entries[ei].order, out_entries[eo].order);
      const auto pi = w.pair_index(ei, eo);
      const Index co = out_entries[eo].multiplicity;
      const Index ci = in_entries[ei].multiplicity;
      for (int e = 0; e < basis.neighbor_count(); ++e)
        w.neighbor[pi].elems.push_back(MatX::Zero(co, ci));
      for (int e = 0; e < basis.self_count(); ++e)
        w.self[pi].elems.push_back(MatX::Zero(co, ci));
    }
  return w;
}

EdgeBasisCache EdgeBasisCache::build(const NeighborGraph& graph,
                                     const GaugeAtlas& atlas,
                                     const KernelBasisSet& bases) {
  EdgeBasisCache cache;
  const int R = bases.max_order();
  cache.max_order_ = R;
  cache.offset_.resize((R + 1) * (R + 1) + 1, 0);
  int off = 0;
  for (int mo = 0; mo <= R; ++mo)
    for (int mi = 0; mi <= R; ++mi) {
      cache.offset_[mo * (R + 1) + mi] = off;
      const auto& basis = bases.pair(mi, mo);
      off += basis.neighbor_count() * basis.dim_out() * basis.dim_in();
    }
  cache.offset_.back() = off;

  const Index n = graph.vertex_count();
  cache.eval_.resize(n);
  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    cache.eval_[p].resize(nb.size());
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const double theta = atlas.log_angle[p][j];
      auto& data = cache.eval_[p][j];
      data.resize(off);
      for (int mo = 0; mo <= R; ++mo)
        for (int mi = 0; mi <= R; ++mi) {
          const auto& basis = bases.pair(mi, mo);
          double* dst = data.data() + cache.offset_[mo * (R + 1) + mi];
          for (int e = 0; e < basis.neighbor_count(); ++e) {
            const MatX k = basis.eval_neighbor(e, theta);
            for (int r = 0; r < basis.dim_out(); ++r)
              for (int c = 0; c < basis.dim_in(); ++c)
                *dst++ = k(r, c);
          }
        }
    }
  }
  return cache;
}

namespace {

// Scratch for one (in_entry, out_entry) pair: the per-basis-element message
// sums U_e = sum_q B_e(theta) [rho(g) f(q)]_block, each d_out x mult_in.
struct PairScratch {
  std::vector<MatX> U;
};

struct ConvPlan {
  const IrrepSignature* in_sig;
  const IrrepSignature* out_sig;
  std::vector<const KernelBasis*> basis;  // per pair
  std::vector<PairScratch> scratch;
};

ConvPlan make_plan(const GemConvWeights& w, const KernelBasisSet& bases) {
  ConvPlan plan{&w.in_sig, &w.out_sig, {}, {}};
  const auto& in_entries = w.in_sig.entries();
  const auto& out_entries = w.out_sig.entries();
  plan.basis.resize(in_entries.size() * out_entries.size());
  plan.scratch.resize(plan.basis.size());
  for (std::size_t eo = 0; eo < out_entries.size(); ++eo)
    for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
      const auto pi = w.pair_index(ei, eo);
      const auto& basis =
          bases.pair(in_entries[ei].order, out_entries[eo].order);
      plan.basis[pi] = &basis;
      for (int e = 0; e < basis.neighbor_count(); ++e)
        plan.scratch[pi].U.push_back(
            MatX::Zero(basis.dim_out(), in_entries[ei].multiplicity));
    }
  return plan;
}

// Accumulates U_e += K_e * block for every neighbor element of one pair;
// `kdata` is the cached (or freshly evaluated) element stack, `row` the
// transported input row.
void accumulate_messages(const KernelBasis& basis, const double* kdata,
                         const double* row, int offset, int mult,
                         PairScratch& scratch) {
  const int din = basis.dim_in();
  const int dout = basis.dim_out();
  for (int e = 0; e < basis.neighbor_count(); ++e) {
    MatX& U = scratch.U[e];
    const double* k = kdata + e * dout * din;
    for (int c = 0; c < mult; ++c) {
      const double* x = row + offset + c * din;
      for (int r = 0; r < dout; ++r) {
        double s = 0.0;
        for (int d = 0; d < din; ++d) s += k[r * din + d] * x[d];
        U(r, c) += s;
      }
    }
  }
}

}  // namespace

IrrepField gem_conv(const IrrepField& field, const NeighborGraph& graph,
                    const GaugeAtlas& atlas, const KernelBasisSet& bases,
                    const GemConvWeights& weights,
                    const EdgeBasisCache* cache) {
  if (!(field.signature == weights.in_sig))
    throw SignatureMismatch("gem_conv: field signature != weight input");
  if (field.vertex_count() != graph.vertex_count())
    throw ShapeMismatch("gem_conv: field/graph vertex count mismatch");
  check_weight_shapes(weights, bases);

  const auto& in_entries = weights.in_sig.entries();
  const auto& out_entries = weights.out_sig.entries();
  ConvPlan plan = make_plan(weights, bases);
  const Index n = field.vertex_count();
  IrrepField out{weights.out_sig, MatX::Zero(n, weights.out_sig.dim())};
  MatX trow(1, weights.in_sig.dim());
  std::vector<double> kbuf;

  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    for (auto& s : plan.scratch)
      for (MatX& U : s.U) U.setZero();
    for (std::size_t j = 0; j < nb.size(); ++j) {
      trow.row(0) = field.values.row(nb[j]);
      apply_rep(weights.in_sig, atlas.transport[p][j], trow, 0);
      for (std::size_t eo = 0; eo < out_entries.size(); ++eo)
        for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
          const auto pi = weights.pair_index(ei, eo);
          const KernelBasis& basis = *plan.basis[pi];
          const double* kdata;
          if (cache) {
            kdata = cache->pair_data(p, j, basis.m_in(), basis.m_out());
          } else {
            kbuf.clear();
            for (int e = 0; e < basis.neighbor_count(); ++e) {
              const MatX k = basis.eval_neighbor(e, atlas.log_angle[p][j]);
              for (int r = 0; r < k.rows(); ++r)
                for (int c = 0; c < k.cols(); ++c) kbuf.push_back(k(r, c));
            }
            kdata = kbuf.data();
          }
          accumulate_messages(basis, kdata, trow.data(),
                              weights.in_sig.offset(ei),
                              in_entries[ei].multiplicity, plan.scratch[pi]);
        }
    }
    const double inv = nb.empty() ? 0.0 : 1.0 / static_cast<double>(nb.size());
    for (std::size_t eo = 0; eo < out_entries.size(); ++eo) {
      const int off_out = weights.out_sig.offset(eo);
      const int co = out_entries[eo].multiplicity;
      for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
        const auto pi = weights.pair_index(ei, eo);
        const KernelBasis& basis = *plan.basis[pi];
        const int dout = basis.dim_out();
        const int din = basis.dim_in();
        const int off_in = weights.in_sig.offset(ei);
        const int ci = in_entries[ei].multiplicity;
        // neighbor term: out_block += (1/|N|) U_e W_e^T
        for (std::size_t e = 0; e < plan.scratch[pi].U.size(); ++e) {
          const MatX& U = plan.scratch[pi].U[e];
          const MatX& W = weights.neighbor[pi].elems[e];
          for (int k = 0; k < co; ++k)
            for (int r = 0; r < dout; ++r) {
              double s = 0.0;
              for (int c = 0; c < ci; ++c) s += U(r, c) * W(k, c);
              out.values(p, off_out + k * dout + r) += inv * s;
            }
        }
        // self term: out_block += (S_e f_block(p)) W_e^T
        for (std::size_t e = 0; e < weights.self[pi].elems.size(); ++e) {
          const MatX& S = basis.self_element(static_cast<int>(e));
          const MatX& W = weights.self[pi].elems[e];
          for (int k = 0; k < co; ++k)
            for (int r = 0; r < dout; ++r) {
              double s = 0.0;
              for (int c = 0; c < ci; ++c) {
                double sf = 0.0;
                for (int d = 0; d < din; ++d)
                  sf += S(r, d) * field.values(p, off_in + c * din + d);
                s += sf * W(k, c);
              }
              out.values(p, off_out + k * dout + r) += s;
            }
        }
      }
    }
  }
  return out;
}

GemConvGrad gem_conv_backward(const IrrepField& field,
                              const NeighborGraph& graph,
                              const GaugeAtlas& atlas,
                              const KernelBasisSet& bases,
                              const GemConvWeights& weights, const MatX& dout,
                              const EdgeBasisCache* cache) {
  if (!(field.signature == weights.in_sig))
    throw SignatureMismatch("gem_conv_backward: field signature mismatch");
  if (dout.rows() != field.vertex_count() ||
      dout.cols() != weights.out_sig.dim())
    throw ShapeMismatch("gem_conv_backward: dout shape mismatch");
  check_weight_shapes(weights, bases);

  const auto& in_entries = weights.in_sig.entries();
  const auto& out_entries = weights.out_sig.entries();
  ConvPlan plan = make_plan(weights, bases);
  std::vector<PairScratch> dU(plan.scratch.size());
  for (std::size_t pi = 0; pi < plan.scratch.size(); ++pi)
    for (const MatX& U : plan.scratch[pi].U)
      dU[pi].U.push_back(MatX::Zero(U.rows(), U.cols()));

  const Index n = field.vertex_count();
  GemConvGrad grad{{weights.in_sig, MatX::Zero(n, weights.in_sig.dim())},
                   make_conv_weights(weights.in_sig, weights.out_sig, bases)};
  MatX trow(1, weights.in_sig.dim());
  MatX dtrow(1, weights.in_sig.dim());
  std::vector<double> kbuf;

  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    const double inv = nb.empty() ? 0.0 : 1.0 / static_cast<double>(nb.size());
    // recompute the forward message sums U
    for (auto& s : plan.scratch)
      for (MatX& U : s.U) U.setZero();
    for (std::size_t j = 0; j < nb.size(); ++j) {
      trow.row(0) = field.values.row(nb[j]);
      apply_rep(weights.in_sig, atlas.transport[p][j], trow, 0);
      for (std::size_t eo = 0; eo < out_entries.size(); ++eo)
        for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
          const auto pi = weights.pair_index(ei, eo);
          const KernelBasis& basis = *plan.basis[pi];
          const double* kdata;
          if (cache) {
            kdata = cache->pair_data(p, j, basis.m_in(), basis.m_out());
          } else {
            kbuf.clear();
            for (int e = 0; e < basis.neighbor_count(); ++e) {
              const MatX k = basis.eval_neighbor(e, atlas.log_angle[p][j]);
              for (int r = 0; r < k.rows(); ++r)
                for (int c = 0; c < k.cols(); ++c) kbuf.push_back(k(r, c));
            }
            kdata = kbuf.data();
          }
          accumulate_messages(basis, kdata, trow.data(),
                              weights.in_sig.offset(ei),
                              in_entries[ei].multiplicity, plan.scratch[pi]);
        }
    }

    for (std::size_t eo = 0; eo < out_entries.size(); ++eo) {
      const int off_out = weights.out_sig.offset(eo);
      const int co = out_entries[eo].multiplicity;
      for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
        const auto pi = weights.pair_index(ei, eo);
        const KernelBasis& basis = *plan.basis[pi];
        const int dout_d = basis.dim_out();
        const int din = basis.dim_in();
        const int off_in = weights.in_sig.offset(ei);
        const int ci = in_entries[ei].multiplicity;
        for (std::size_t e = 0; e < plan.scratch[pi].U.size(); ++e) {
          const MatX& U = plan.scratch[pi].U[e];
          const MatX& W = weights.neighbor[pi].elems[e];
          MatX& dW = grad.dweights.neighbor[pi].elems[e];
          MatX& dUe = dU[pi].U[e];
          dUe.setZero();
          for (int k = 0; k < co; ++k)
            for (int r = 0; r < dout_d; ++r) {
              const double g = inv * dout(p, off_out + k * dout_d + r);
              if (g == 0.0) continue;
              for (int c = 0; c < ci; ++c) {
                dW(k, c) += g * U(r, c);
                dUe(r, c) += g * W(k, c);
              }
            }
        }
        for (std::size_t e = 0; e < weights.self[pi].elems.size(); ++e) {
          const MatX& S = basis.self_element(static_cast<int>(e));
          const MatX& W = weights.self[pi].elems[e];
          MatX& dW = grad.dweights.self[pi].elems[e];
          for (int k = 0; k < co; ++k)
            for (int r = 0; r < dout_d; ++r) {
              const double g = dout(p, off_out + k * dout_d + r);
              if (g == 0.0) continue;
              for (int c = 0; c < ci; ++c) {
                double sf = 0.0;
                for (int d = 0; d < din; ++d)
                  sf += S(r, d) * field.values(p, off_in + c * din + d);
                dW(k, c) += g * sf;
                for (int d = 0; d < din; ++d)
                  grad.dfield.values(p, off_in + c * din + d) +=
                      g * W(k, c) * S(r, d);
              }
            }
        }
      }
    }

    // push dU back through the per-edge messages
    for (std::size_t j = 0; j < nb.size(); ++j) {
      dtrow.setZero();
      for (std::size_t eo = 0; eo < out_entries.size(); ++eo)
        for (std::size_t ei = 0; ei < in_entries.size(); ++ei) {
          const auto pi = weights.pair_index(ei, eo);
          const KernelBasis& basis = *plan.basis[pi];
          const int dout_d = basis.dim_out();
          const int din = basis.dim_in();
          const int off_in = weights.in_sig.offset(ei);
          const int ci = in_entries[ei].multiplicity;
          const double* kdata;
          if (cache) {
            kdata = cache->pair_data(p, j, basis.m_in(), basis.m_out());
          } else {
            kbuf.clear();
            for (int e = 0; e < basis.neighbor_count(); ++e) {
              const MatX k = basis.eval_neighbor(e, atlas.log_angle[p][j]);
              for (int r = 0; r < k.rows(); ++r)
                for (int c = 0; c < k.cols(); ++c) kbuf.push_back(k(r, c));
            }
            kdata = kbuf.data();
          }
          for (std::size_t e = 0; e < dU[pi].U.size(); ++e) {
            const MatX& dUe = dU[pi].U[e];
            const double* k = kdata + e * dout_d * din;
            for (int c = 0; c < ci; ++c)
              for (int d = 0; d < din; ++d) {
                double s = 0.0;
                for (int r = 0; r < dout_d; ++r) s += k[r * din + d] * dUe(r, c);
                dtrow(0, off_in + c * din + d) += s;
              }
          }
        }
      apply_rep(weights.in_sig, -atlas.transport[p][j], dtrow, 0);
      grad.dfield.values.row(nb[j]) += dtrow.row(0);
    }
  }
  return grad;
}

namespace {

void check_regular(const IrrepSignature& sig) {
  const auto& entries = sig.entries();
  if (entries.empty()) throw SignatureMismatch("regular_nonlinearity: empty");
  for (std::size_t e = 0; e < entries.size(); ++e) {
    if (entries[e].order != static_cast<int>(e) ||
        entries[e].multiplicity != entries[0].multiplicity)
      throw SignatureMismatch(
          "regular_nonlinearity: signature is not a regular feature "
          "(orders 0..M with equal multiplicity)");
  }
}

}  // namespace

IrrepField regular_nonlinearity(const IrrepField& field, int N) {
  check_regular(field.signature);
  const int M = field.signature.max_order();
  if (N < 2 * M + 1)
    throw Underbanded("regular_nonlinearity: N < 2 max_order + 1");
  const int mult = field.signature.entries()[0].multiplicity;
  const Index n = field.vertex_count();
  IrrepField out{field.signature, MatX::Zero(n, field.signature.dim())};
  std::vector<double> s(N);
  for (Index v = 0; v < n; ++v)
    for (int ch = 0; ch < mult; ++ch) {
      for (int k = 0; k < N; ++k) {
        const double alpha = kTwoPi * k / N;
        double val = field.values(v, ch);
        for (int m = 1; m <= M; ++m) {
          const int off = field.signature.offset(m) + 2 * ch;
          val += field.values(v, off) * std::cos(m * alpha) +
                 field.values(v, off + 1) * std::sin(m * alpha);
        }
        s[k] = std::max(0.0, val);
      }
      for (int k = 0; k < N; ++k) {
        const double alpha = kTwoPi * k / N;
        out.values(v, ch) += s[k] / N;
        for (int m = 1; m <= M; ++m) {
          const int off = field.signature.offset(m) + 2 * ch;
          out.values(v, off) += 2.0 * s[k] * std::cos(m * alpha) / N;
          out.values(v, off + 1) += 2.0 * s[k] * std::sin(m * alpha) / N;
        }
      }
    }
  return out;
}

MatX regular_nonlinearity_backward(const IrrepField& field, int N,
                                   const MatX& dout) {
  check_regular(field.signature);
  const int M = field.signature.max_order();
  if (N < 2 * M + 1)
    throw Underbanded("regular_nonlinearity: N < 2 max_order + 1");
  if (dout.rows() != field.vertex_count() ||
      dout.cols() != field.signature.dim())
    throw ShapeMismatch("regular_nonlinearity_backward: dout shape");
  const int mult = field.signature.entries()[0].multiplicity;
  const Index n = field.vertex_count();
  MatX din = MatX::Zero(n, field.signature.dim());
  for (Index v = 0; v < n; ++v)
    for (int ch = 0; ch < mult; ++ch)
      for (int k = 0; k < N; ++k) {
        const double alpha = kTwoPi * k / N;
        double val = field.values(v, ch);
        for (int m = 1; m <= M; ++m) {
          const int off = field.signature.offset(m) + 2 * ch;
          val += field.values(v, off) * std::cos(m * alpha) +
                 field.values(v, off + 1) * std::sin(m * alpha);
        }
        if (val <= 0.0) continue;  // ReLU subgradient 0 at the kink
        double ds = dout(v, ch) / N;
        for (int m = 1; m <= M; ++m) {
          const int off = field.signature.offset(m) + 2 * ch;
          ds += 2.0 * (dout(v, off) * std::cos(m * alpha) +
                       dout(v, off + 1) * std::sin(m * alpha)) /
                N;
        }
        din(v, ch) += ds;
        for (int m = 1; m <= M; ++m) {
          const int off = field.signature.offset(m) + 2 * ch;
          din(v, off) += ds * std::cos(m * alpha);
          din(v, off + 1) += ds * std::sin(m * alpha);
        }
      }
  return din;
}

NormStats compute_norm_stats(const std::vector<const IrrepField*>& batch,
                             double eps) {
  if (batch.empty()) throw ShapeMismatch("compute_norm_stats: empty batch");
  const IrrepSignature& sig = batch.front()->signature;
  Index total = 0;
  for (const IrrepField* f : batch) {
    if (!(f->signature == sig))
      throw SignatureMismatch("compute_norm_stats: mixed signatures");
    total += f->vertex_count();
  }
  int n0 = 0, nm = 0;
  for (const auto& e : sig.entries())
    (e.order == 0 ? n0 : nm) += e.multiplicity;
  NormStats stats{VecX::Zero(n0), VecX::Zero(n0), VecX::Zero(nm)};
  int c0 = 0, cm = 0;
  for (std::size_t e = 0; e < sig.entries().size(); ++e) {
    const auto& entry = sig.entries()[e];
    const int off = sig.offset(e);
    if (entry.order == 0) {
      for (int ch = 0; ch < entry.multiplicity; ++ch, ++c0) {
        double mean = 0.0, sq = 0.0;
        for (const IrrepField* f : batch) {
          mean += f->values.col(off + ch).sum();
          sq += f->values.col(off + ch).squaredNorm();
        }
        mean /= total;
        stats.mean0[c0] = mean;
        stats.var0[c0] = std::max(0.0, sq / total - mean * mean);
      }
    } else {
      for (int ch = 0; ch < entry.multiplicity; ++ch, ++cm) {
        double norm = 0.0;
        for (const IrrepField* f : batch)
          for (Index v = 0; v < f->vertex_count(); ++v)
            norm += std::hypot(f->values(v, off + 2 * ch),
                               f->values(v, off + 2 * ch + 1));
        stats.norm_m[cm] = norm / total;
      }
    }
  }
  (void)eps;
  return stats;
}

IrrepField equivariant_norm(const IrrepField& field, const NormStats& stats,
                            double eps) {
  const IrrepSignature& sig = field.signature;
  IrrepField out{sig, field.values};
  int c0 = 0, cm = 0;
  for (std::size_t e = 0; e < sig.entries().size(); ++e) {
    const auto& entry = sig.entries()[e];
    const int off = sig.offset(e);
    if (entry.order == 0) {
      for (int ch = 0; ch < entry.multiplicity; ++ch, ++c0) {
        if (c0 >= stats.mean0.size())
          throw SignatureMismatch("equivariant_norm: stats channel mismatch");
        out.values.col(off + ch) =
            (field.values.col(off + ch).array() - stats.mean0[c0]) /
            std::sqrt(stats.var0[c0] + eps);
      }
    } else {
      for (int ch = 0; ch < entry.multiplicity; ++ch, ++cm) {
        if (cm >= stats.norm_m.size())
          throw SignatureMismatch("equivariant_norm: stats channel mismatch");
        const double scale = 1.0 / (stats.norm_m[cm] + eps);
        out.values.col(off + 2 * ch) *= scale;
        out.values.col(off + 2 * ch + 1) *= scale;
      }
    }
  }
  return out;
}

IrrepField concat_fields(const IrrepField& a, const IrrepField& b) {
  if (a.vertex_count() != b.vertex_count())
    throw ShapeMismatch("concat_fields: vertex count mismatch");
  const IrrepSignature merged = concat(a.signature, b.signature);
  IrrepField out{merged, MatX::Zero(a.vertex_count(), merged.dim())};
  // per merged entry: a's copies of that order first, then b's
  for (std::size_t e = 0; e < merged.entries().size(); ++e) {
    const auto& entry = merged.entries()[e];
    int dst = merged.offset(e);
    for (const IrrepField* src : {&a, &b}) {
      const auto& se = src->signature.entries();
      for (std::size_t i = 0; i < se.size(); ++i)
        if (se[i].order == entry.order) {
          const int w = se[i].dim();
          out.values.middleCols(dst, w) =
              src->values.middleCols(src->signature.offset(i), w);
          dst += w;
        }
    }
  }
  return out;
}

std::pair<MatX, MatX> split_concat_grad(const IrrepSignature& a,
                                        const IrrepSignature& b,
                                        const MatX& dout) {
  const IrrepSignature merged = concat(a, b);
  if (dout.cols() != merged.dim())
    throw ShapeMismatch("split_concat_grad: dout width mismatch");
  MatX da = MatX::Zero(dout.rows(), a.dim());
  MatX db = MatX::Zero(dout.rows(), b.dim());
  for (std::size_t e = 0; e < merged.entries().size(); ++e) {
    const auto& entry = merged.entries()[e];
    int src = merged.offset(e);
    // a's copies first, then b's (mirrors concat_fields)
    const IrrepSignature* sigs[2] = {&a, &b};
    MatX* grads[2] = {&da, &db};
    for (int s = 0; s < 2; ++s) {
      const auto& se = sigs[s]->entries();
      for (std::size_t i = 0; i < se.size(); ++i)
        if (se[i].order == entry.order) {
          const int w = se[i].dim();
          grads[s]->middleCols(sigs[s]->offset(i), w) =
              dout.middleCols(src, w);
          src += w;
        }
    }
  }
  return {std::move(da), std::move(db)};
}

}  // namespace gem
