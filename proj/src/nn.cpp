#include "gem/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gem/baselines.hpp"

namespace gem::nn {

using json = nlohmann::json;

std::string to_string(ConvKind k) {
  switch (k) {
    case ConvKind::gem: return "gem";
    case ConvKind::isotropic: return "isotropic";
    case ConvKind::attention: return "attention";
    case ConvKind::pointnet: return "pointnet";
  }
  throw ConfigInvalid("unknown conv kind");
}

ConvKind conv_kind_from_string(const std::string& s) {
  if (s == "gem") return ConvKind::gem;
  if (s == "isotropic") return ConvKind::isotropic;
  if (s == "attention") return ConvKind::attention;
  if (s == "pointnet") return ConvKind::pointnet;
  throw ConfigInvalid("unknown conv kind: " + s);
}

std::string to_string(Target t) {
  return t == Target::wss ? "wss" : "pressure";
}

Target target_from_string(const std::string& s) {
  if (s == "wss") return Target::wss;
  if (s == "pressure") return Target::pressure;
  throw ConfigInvalid("unknown target: " + s);
}

std::string ModelConfig::to_json() const {
  json j;
  j["conv_kind"] = nn::to_string(conv_kind);
  j["levels"] = levels;
  j["widths"] = widths;
  j["blocks"] = blocks;
  j["time_steps"] = time_steps;
  j["seed"] = seed;
  j["target"] = nn::to_string(target);
  j["max_order"] = max_order;
  j["nonlin_samples"] = nonlin_samples;
  j["with_bc"] = with_bc;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.conv_kind = conv_kind_from_string(j.at("conv_kind").get<std::string>());
  c.levels = j.at("levels").get<int>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.blocks = j.at("blocks").get<int>();
  c.time_steps = j.at("time_steps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.target = target_from_string(j.at("target").get<std::string>());
  c.max_order = j.at("max_order").get<int>();
  c.nonlin_samples = j.at("nonlin_samples").get<int>();
  c.with_bc = j.at("with_bc").get<bool>();
  return c;
}

namespace {

void init_uniform(MatX& m, double fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> u(-a, a);
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
}

struct SkipStore {
  std::vector<Batch> saved;
  std::vector<Batch> dsaved;
};

// ---- GEM layers ------------------------------------------------------------

class GemConvLayer : public Layer {
 public:
  GemConvLayer(int level, const IrrepSignature& in_sig,
               const IrrepSignature& out_sig, const KernelBasisSet& bases,
               std::mt19937_64& rng)
      : level_(level), bases_(&bases) {
    w_ = make_conv_weights(in_sig, out_sig, bases);
    gw_ = make_conv_weights(in_sig, out_sig, bases);
    const double fan_in = in_sig.dim();
    for (auto* list : {&w_.neighbor, &w_.self})
      for (auto& pw : *list)
        for (MatX& m : pw.elems) init_uniform(m, fan_in, rng);
  }

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    in_ = in;
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const IrrepField f{w_.in_sig, in[i]};
      const auto& lvl = geo[i]->level(level_);
      out[i] = gem_conv(f, lvl.graph, lvl.atlas, *bases_, w_,
                        &geo[i]->cache(level_, *bases_))
                   .values;
    }
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const IrrepField f{w_.in_sig, in_[i]};
      const auto& lvl = geo[i]->level(level_);
      GemConvGrad g =
          gem_conv_backward(f, lvl.graph, lvl.atlas, *bases_, w_, dout[i],
                            &geo[i]->cache(level_, *bases_));
      din[i] = std::move(g.dfield.values);
      for (auto [dst, src] : {std::pair{&gw_.neighbor, &g.dweights.neighbor},
                              std::pair{&gw_.self, &g.dweights.self}})
        for (std::size_t pi = 0; pi < dst->size(); ++pi)
          for (std::size_t e = 0; e < (*dst)[pi].elems.size(); ++e)
            (*dst)[pi].elems[e] += (*src)[pi].elems[e];
    }
    return din;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    for (auto [tag, wl, gl] :
         {std::tuple{"nb", &w_.neighbor, &gw_.neighbor},
          std::tuple{"self", &w_.self, &gw_.self}})
      for (std::size_t pi = 0; pi < wl->size(); ++pi)
        for (std::size_t e = 0; e < (*wl)[pi].elems.size(); ++e)
          out.push_back({prefix + "." + tag + "." + std::to_string(pi) + "." +
                             std::to_string(e),
                         &(*wl)[pi].elems[e], &(*gl)[pi].elems[e]});
  }

  const IrrepSignature& out_sig() const { return w_.out_sig; }

 private:
  int level_;
  const KernelBasisSet* bases_;
  GemConvWeights w_, gw_;
  Batch in_;
};

class RegularNonlinLayer : public Layer {
 public:
  RegularNonlinLayer(const IrrepSignature& sig, int N, const bool* enabled)
      : sig_(sig), n_(N), enabled_(enabled) {}

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    in_ = in;
    if (!*enabled_) return in;
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = regular_nonlinearity({sig_, in[i]}, n_).values;
    return out;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    if (!*enabled_) return dout;
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i)
      din[i] = regular_nonlinearity_backward({sig_, in_[i]}, n_, dout[i]);
    return din;
  }

 private:
  IrrepSignature sig_;
  int n_;
  const bool* enabled_;
  Batch in_;
};

// Affine equivariant batch normalisation: m=0 channels get (x-mu)/sigma then
// gamma, beta; m>=1 channels are scaled by gamma / (mean channel norm + eps).
class EquivNormLayer : public Layer {
 public:
  explicit EquivNormLayer(const IrrepSignature& sig) : sig_(sig) {
    int n0 = 0, nm = 0;
    for (const auto& e : sig.entries())
      (e.order == 0 ? n0 : nm) += e.multiplicity;
    gamma0_ = MatX::Ones(1, n0);
    beta0_ = MatX::Zero(1, n0);
    gamma_m_ = MatX::Ones(1, nm);
    dgamma0_ = MatX::Zero(1, n0);
    dbeta0_ = MatX::Zero(1, n0);
    dgamma_m_ = MatX::Zero(1, nm);
  }

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    in_ = in;
    std::vector<const IrrepField*> fields;
    fields_.clear();
    for (const MatX& m : in) fields_.push_back({sig_, m});
    for (const auto& f : fields_) fields.push_back(&f);
    stats_ = compute_norm_stats(fields, kEps);
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = equivariant_norm(fields_[i], stats_, kEps).values;
      int c0 = 0, cm = 0;
      for (std::size_t e = 0; e < sig_.entries().size(); ++e) {
        const auto& entry = sig_.entries()[e];
        const int off = sig_.offset(e);
        if (entry.order == 0) {
          for (int ch = 0; ch < entry.multiplicity; ++ch, ++c0)
            out[i].col(off + ch) =
                gamma0_(0, c0) * out[i].col(off + ch).array() + beta0_(0, c0);
        } else {
          for (int ch = 0; ch < entry.multiplicity; ++ch, ++cm) {
            out[i].col(off + 2 * ch) *= gamma_m_(0, cm);
            out[i].col(off + 2 * ch + 1) *= gamma_m_(0, cm);
          }
        }
      }
    }
    return out;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    Index total = 0;
    for (const MatX& m : in_) total += m.rows();
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i)
      din[i] = MatX::Zero(in_[i].rows(), in_[i].cols());

    int c0 = 0, cm = 0;
    for (std::size_t e = 0; e < sig_.entries().size(); ++e) {
      const auto& entry = sig_.entries()[e];
      const int off = sig_.offset(e);
      if (entry.order == 0) {
        for (int ch = 0; ch < entry.multiplicity; ++ch, ++c0) {
          const double mu = stats_.mean0[c0];
          const double s = std::sqrt(stats_.var0[c0] + kEps);
          // accumulate the batch-wide sums of the standard BN backward
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t i = 0; i < in_.size(); ++i)
            for (Index v = 0; v < in_[i].rows(); ++v) {
              const double xhat = (in_[i](v, off + ch) - mu) / s;
              const double dy = dout[i](v, off + ch);
              dgamma0_(0, c0) += dy * xhat;
              dbeta0_(0, c0) += dy;
              const double dxhat = dy * gamma0_(0, c0);
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
          for (std::size_t i = 0; i < in_.size(); ++i)
            for (Index v = 0; v < in_[i].rows(); ++v) {
              const double xhat = (in_[i](v, off + ch) - mu) / s;
              const double dxhat = dout[i](v, off + ch) * gamma0_(0, c0);
              din[i](v, off + ch) =
                  (dxhat - sum_dxhat / total - xhat * sum_dxhat_xhat / total) /
                  s;
            }
        }
      } else {
        for (int ch = 0; ch < entry.multiplicity; ++ch, ++cm) {
          const double s = stats_.norm_m[cm] + kEps;
          const double g = gamma_m_(0, cm);
          double corr = 0.0;  // sum over the batch of dy . x
          for (std::size_t i = 0; i < in_.size(); ++i)
            for (Index v = 0; v < in_[i].rows(); ++v) {
              const double x0 = in_[i](v, off + 2 * ch);
              const double x1 = in_[i](v, off + 2 * ch + 1);
              const double dy0 = dout[i](v, off + 2 * ch);
              const double dy1 = dout[i](v, off + 2 * ch + 1);
              dgamma_m_(0, cm) += (dy0 * x0 + dy1 * x1) / s;
              corr += dy0 * x0 + dy1 * x1;
            }
          // d nu / d x_v = x_v / (||x_v|| total)
          const double factor = g * corr / (s * s * total);
          for (std::size_t i = 0; i < in_.size(); ++i)
            for (Index v = 0; v < in_[i].rows(); ++v) {
              const double x0 = in_[i](v, off + 2 * ch);
              const double x1 = in_[i](v, off + 2 * ch + 1);
              const double nrm = std::hypot(x0, x1);
              din[i](v, off + 2 * ch) = g * dout[i](v, off + 2 * ch) / s;
              din[i](v, off + 2 * ch + 1) =
                  g * dout[i](v, off + 2 * ch + 1) / s;
              if (nrm > 0.0) {
                din[i](v, off + 2 * ch) -= factor * x0 / nrm;
                din[i](v, off + 2 * ch + 1) -= factor * x1 / nrm;
              }
            }
        }
      }
    }
    return din;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    if (gamma0_.cols() > 0) {
      out.push_back({prefix + ".gamma0", &gamma0_, &dgamma0_});
      out.push_back({prefix + ".beta0", &beta0_, &dbeta0_});
    }
    if (gamma_m_.cols() > 0)
      out.push_back({prefix + ".gamma_m", &gamma_m_, &dgamma_m_});
  }

 private:
  static constexpr double kEps = 1e-5;
  IrrepSignature sig_;
  MatX gamma0_, beta0_, gamma_m_;
  MatX dgamma0_, dbeta0_, dgamma_m_;
  Batch in_;
  std::vector<IrrepField> fields_;
  NormStats stats_;
};

class GemPoolLayer : public Layer {
 public:
  GemPoolLayer(int level, const IrrepSignature& sig)
      : level_(level), sig_(sig) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = pool({sig_, in[i]}, geo[i]->hierarchy, level_).values;
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      const Index nf = static_cast<Index>(cm.assignment.size());
      din[i] = MatX::Zero(nf, sig_.dim());
      for (Index q = 0; q < nf; ++q) {
        const Index c = cm.assignment[q];
        din[i].row(q) = dout[i].row(c) /
                        static_cast<double>(cm.members[c].size());
        apply_rep(sig_, -cm.transport[q], din[i], q);
      }
    }
    return din;
  }

 private:
  int level_;
  IrrepSignature sig_;
};

class GemUnpoolLayer : public Layer {
 public:
  GemUnpoolLayer(int level, const IrrepSignature& sig)
      : level_(level), sig_(sig) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = unpool({sig_, in[i]}, geo[i]->hierarchy, level_).values;
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      const Index nc = static_cast<Index>(cm.members.size());
      din[i] = MatX::Zero(nc, sig_.dim());
      MatX buf(1, sig_.dim());
      for (Index q = 0; q < static_cast<Index>(cm.assignment.size()); ++q) {
        buf.row(0) = dout[i].row(q);
        apply_rep(sig_, cm.transport[q], buf, 0);
        din[i].row(cm.assignment[q]) += buf.row(0);
      }
    }
    return din;
  }

 private:
  int level_;
  IrrepSignature sig_;
};

class SkipSaveLayer : public Layer {
 public:
  SkipSaveLayer(int id, SkipStore* store) : id_(id), store_(store) {}

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    store_->saved[id_] = in;
    return in;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    Batch out = dout;
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += store_->dsaved[id_][i];
    return out;
  }

 private:
  int id_;
  SkipStore* store_;
};

// Concatenates the incoming (unpooled) batch with the saved skip batch.
class GemConcatLayer : public Layer {
 public:
  GemConcatLayer(int id, SkipStore* store, const IrrepSignature& sig_in,
                 const IrrepSignature& sig_skip)
      : id_(id), store_(store), sig_in_(sig_in), sig_skip_(sig_skip) {}

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = concat_fields({sig_in_, in[i]},
                             {sig_skip_, store_->saved[id_][i]})
                   .values;
    return out;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    Batch din(dout.size());
    store_->dsaved[id_].resize(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      auto [da, db] = split_concat_grad(sig_in_, sig_skip_, dout[i]);
      din[i] = std::move(da);
      store_->dsaved[id_][i] = std::move(db);
    }
    return din;
  }

 private:
  int id_;
  SkipStore* store_;
  IrrepSignature sig_in_, sig_skip_;
};

class HeadLayer : public Layer {
 public:
  explicit HeadLayer(int T) : t_(T), sig_({{0, T}, {1, T}}) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = output_head({sig_, in[i]}, geo[i]->level(0).atlas, t_);
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i)
      din[i] = output_head_backward(dout[i], geo[i]->level(0).atlas, t_);
    return din;
  }

 private:
  int t_;
  IrrepSignature sig_;
};

// ---- baseline layers -------------------------------------------------------

class IsoConvLayer : public Layer {
 public:
  IsoConvLayer(int level, Index cin, Index cout, std::mt19937_64& rng)
      : level_(level), w_(cin, cout), gw_(MatX::Zero(cin, cout)) {
    init_uniform(w_, static_cast<double>(cin), rng);
  }

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    in_ = in;
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = isotropic_conv(in[i], geo[i]->level(level_).graph, w_);
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      IsotropicGrad g = isotropic_conv_backward(
          in_[i], geo[i]->level(level_).graph, w_, dout[i]);
      din[i] = std::move(g.dfield);
      gw_ += g.dW;
    }
    return din;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    out.push_back({prefix + ".W", &w_, &gw_});
  }

 private:
  int level_;
  MatX w_, gw_;
  Batch in_;
};

class AttnConvLayer : public Layer {
 public:
  AttnConvLayer(int level, Index cin, Index cout, std::mt19937_64& rng)
      : level_(level),
        w_(cin, cout),
        score_(cin, 1),
        gw_(MatX::Zero(cin, cout)),
        gscore_(MatX::Zero(cin, 1)) {
    init_uniform(w_, static_cast<double>(cin), rng);
    init_uniform(score_, static_cast<double>(cin), rng);
  }

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    in_ = in;
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = attention_conv(in[i], geo[i]->level(level_).graph, w_,
                              score_.col(0));
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      AttentionGrad g = attention_conv_backward(
          in_[i], geo[i]->level(level_).graph, w_, score_.col(0), dout[i]);
      din[i] = std::move(g.dfield);
      gw_ += g.dW;
      gscore_.col(0) += g.dw;
    }
    return din;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    out.push_back({prefix + ".W", &w_, &gw_});
    out.push_back({prefix + ".w", &score_, &gscore_});
  }

 private:
  int level_;
  MatX w_, score_, gw_, gscore_;
  Batch in_;
};

// Parameters live in MatX members so the optimizer can address them; the Mlp
// struct (whose biases are VecX) is assembled on demand.
class PointnetConvLayer : public Layer {
 public:
  PointnetConvLayer(int level, Index cin, Index cout, Index hidden,
                    std::mt19937_64& rng)
      : level_(level),
        w1_(cin + 3, hidden),
        b1_(MatX::Zero(hidden, 1)),
        w2_(hidden, cout),
        b2_(MatX::Zero(cout, 1)),
        gw1_(MatX::Zero(cin + 3, hidden)),
        gb1_(MatX::Zero(hidden, 1)),
        gw2_(MatX::Zero(hidden, cout)),
        gb2_(MatX::Zero(cout, 1)) {
    init_uniform(w1_, static_cast<double>(cin + 3), rng);
    init_uniform(w2_, static_cast<double>(hidden), rng);
  }

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    in_ = in;
    const Mlp theta = mlp_();
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const auto& lvl = geo[i]->level(level_);
      out[i] = pointnet_message(in[i], lvl.graph, lvl.positions, theta);
    }
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    const Mlp theta = mlp_();
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const auto& lvl = geo[i]->level(level_);
      PointnetGrad g = pointnet_message_backward(in_[i], lvl.graph,
                                                 lvl.positions, theta,
                                                 dout[i]);
      din[i] = std::move(g.dfield);
      gw1_ += g.dtheta.W1;
      gb1_.col(0) += g.dtheta.b1;
      gw2_ += g.dtheta.W2;
      gb2_.col(0) += g.dtheta.b2;
    }
    return din;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    out.push_back({prefix + ".W1", &w1_, &gw1_});
    out.push_back({prefix + ".b1", &b1_, &gb1_});
    out.push_back({prefix + ".W2", &w2_, &gw2_});
    out.push_back({prefix + ".b2", &b2_, &gb2_});
  }

 private:
  Mlp mlp_() const { return {w1_, b1_.col(0), w2_, b2_.col(0)}; }

  int level_;
  MatX w1_, b1_, w2_, b2_;
  MatX gw1_, gb1_, gw2_, gb2_;
  Batch in_;
};

class ReluLayer : public Layer {
 public:
  explicit ReluLayer(const bool* enabled) : enabled_(enabled) {}

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    in_ = in;
    if (!*enabled_) return in;
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = in[i].cwiseMax(0.0);
    return out;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    if (!*enabled_) return dout;
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i)
      din[i] = (in_[i].array() > 0.0).cast<double>() * dout[i].array();
    return din;
  }

 private:
  const bool* enabled_;
  Batch in_;
};

class PlainNormLayer : public Layer {
 public:
  explicit PlainNormLayer(Index channels)
      : gamma_(MatX::Ones(1, channels)),
        beta_(MatX::Zero(1, channels)),
        dgamma_(MatX::Zero(1, channels)),
        dbeta_(MatX::Zero(1, channels)) {}

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    in_ = in;
    Index total = 0;
    for (const MatX& m : in) total += m.rows();
    mean_ = VecX::Zero(gamma_.cols());
    var_ = VecX::Zero(gamma_.cols());
    for (const MatX& m : in) mean_ += m.colwise().sum().transpose();
    mean_ /= total;
    for (const MatX& m : in)
      var_ += (m.rowwise() - mean_.transpose()).array().square().colwise().sum().matrix().transpose();
    var_ /= total;
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = in[i];
      for (Index c = 0; c < gamma_.cols(); ++c)
        out[i].col(c) = gamma_(0, c) *
                            (in[i].col(c).array() - mean_[c]) /
                            std::sqrt(var_[c] + kEps) +
                        beta_(0, c);
    }
    return out;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    Index total = 0;
    for (const MatX& m : in_) total += m.rows();
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i)
      din[i] = MatX::Zero(in_[i].rows(), in_[i].cols());
    for (Index c = 0; c < gamma_.cols(); ++c) {
      const double s = std::sqrt(var_[c] + kEps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < in_.size(); ++i)
        for (Index v = 0; v < in_[i].rows(); ++v) {
          const double xhat = (in_[i](v, c) - mean_[c]) / s;
          const double dy = dout[i](v, c);
          dgamma_(0, c) += dy * xhat;
          dbeta_(0, c) += dy;
          const double dxhat = dy * gamma_(0, c);
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
      for (std::size_t i = 0; i < in_.size(); ++i)
        for (Index v = 0; v < in_[i].rows(); ++v) {
          const double xhat = (in_[i](v, c) - mean_[c]) / s;
          const double dxhat = dout[i](v, c) * gamma_(0, c);
          din[i](v, c) =
              (dxhat - sum_dxhat / total - xhat * sum_dxhat_xhat / total) / s;
        }
    }
    return din;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    out.push_back({prefix + ".gamma", &gamma_, &dgamma_});
    out.push_back({prefix + ".beta", &beta_, &dbeta_});
  }

 private:
  static constexpr double kEps = 1e-5;
  MatX gamma_, beta_, dgamma_, dbeta_;
  Batch in_;
  VecX mean_, var_;
};

class MeanPoolLayer : public Layer {
 public:
  explicit MeanPoolLayer(int level) : level_(level) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      out[i] = MatX::Zero(static_cast<Index>(cm.members.size()), in[i].cols());
      for (std::size_t c = 0; c < cm.members.size(); ++c) {
        for (Index q : cm.members[c]) out[i].row(c) += in[i].row(q);
        out[i].row(c) /= static_cast<double>(cm.members[c].size());
      }
    }
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      din[i] = MatX::Zero(static_cast<Index>(cm.assignment.size()),
                          dout[i].cols());
      for (Index q = 0; q < din[i].rows(); ++q) {
        const Index c = cm.assignment[q];
        din[i].row(q) =
            dout[i].row(c) / static_cast<double>(cm.members[c].size());
      }
    }
    return din;
  }

 private:
  int level_;
};

class BroadcastUnpoolLayer : public Layer {
 public:
  explicit BroadcastUnpoolLayer(int level) : level_(level) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      out[i] = MatX(static_cast<Index>(cm.assignment.size()), in[i].cols());
      for (Index q = 0; q < out[i].rows(); ++q)
        out[i].row(q) = in[i].row(cm.assignment[q]);
    }
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      din[i] = MatX::Zero(static_cast<Index>(cm.members.size()),
                          dout[i].cols());
      for (Index q = 0; q < dout[i].rows(); ++q)
        din[i].row(cm.assignment[q]) += dout[i].row(q);
    }
    return din;
  }

 private:
  int level_;
};

class MaxPoolLayer : public Layer {
 public:
  explicit MaxPoolLayer(int level) : level_(level) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    winners_.assign(in.size(), {});
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      const Index nc = static_cast<Index>(cm.members.size());
      out[i] = MatX(nc, in[i].cols());
      winners_[i].resize(nc, in[i].cols());
      for (Index c = 0; c < nc; ++c)
        for (Index ch = 0; ch < in[i].cols(); ++ch) {
          Index best = cm.members[c][0];
          for (Index q : cm.members[c])
            if (in[i](q, ch) > in[i](best, ch)) best = q;
          out[i](c, ch) = in[i](best, ch);
          winners_[i](c, ch) = best;
        }
    }
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const ClusterMap& cm = geo[i]->hierarchy.clusters[level_];
      din[i] = MatX::Zero(static_cast<Index>(cm.assignment.size()),
                          dout[i].cols());
      for (Index c = 0; c < dout[i].rows(); ++c)
        for (Index ch = 0; ch < dout[i].cols(); ++ch)
          din[i](winners_[i](c, ch), ch) += dout[i](c, ch);
    }
    return din;
  }

 private:
  int level_;
  std::vector<Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>> winners_;
};

// Inverse-distance-weighted interpolation from the 3 nearest coarse vertices.
class IdwUnpoolLayer : public Layer {
 public:
  explicit IdwUnpoolLayer(int level) : level_(level) {}

  Batch forward(const GeoBatch& geo, const Batch& in, bool) override {
    plans_.assign(in.size(), {});
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const auto& fine = geo[i]->level(level_);
      const auto& coarse = geo[i]->level(level_ + 1);
      const Index nf = fine.positions.rows();
      const Index nc = coarse.positions.rows();
      const int k = static_cast<int>(std::min<Index>(3, nc));
      auto& plan = plans_[i];
      plan.resize(nf);
      out[i] = MatX::Zero(nf, in[i].cols());
      // quantized sort keys: equidistant ties pick the lowest coarse index
      // identically under rigid motions of the sample
      const double diag = (fine.positions.colwise().maxCoeff() -
                           fine.positions.colwise().minCoeff())
                              .norm();
      const double quantum = std::max(diag, 1.0) * 1e-9;
      for (Index q = 0; q < nf; ++q) {
        std::vector<std::pair<std::int64_t, Index>> d(nc);
        std::vector<double> dist(nc);
        for (Index c = 0; c < nc; ++c) {
          dist[c] = (fine.positions.row(q) - coarse.positions.row(c)).norm();
          d[c] = {static_cast<std::int64_t>(std::floor(dist[c] / quantum)), c};
        }
        std::partial_sort(d.begin(), d.begin() + k, d.end());
        double wsum = 0.0;
        for (int j = 0; j < k; ++j) {
          const double dj = dist[d[j].second];
          const double w = 1.0 / (dj * dj + 1e-12);
          plan[q].push_back({d[j].second, w});
          wsum += w;
        }
        for (auto& [c, w] : plan[q]) {
          w /= wsum;
          out[i].row(q) += w * in[i].row(c);
        }
      }
    }
    return out;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch din(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const auto& coarse = geo[i]->level(level_ + 1);
      din[i] = MatX::Zero(coarse.positions.rows(), dout[i].cols());
      for (Index q = 0; q < dout[i].rows(); ++q)
        for (const auto& [c, w] : plans_[i][q])
          din[i].row(c) += w * dout[i].row(q);
    }
    return din;
  }

 private:
  int level_;
  std::vector<std::vector<std::vector<std::pair<Index, double>>>> plans_;
};

class PlainConcatLayer : public Layer {
 public:
  PlainConcatLayer(int id, SkipStore* store, Index cin, Index cskip)
      : id_(id), store_(store), cin_(cin), cskip_(cskip) {}

  Batch forward(const GeoBatch&, const Batch& in, bool) override {
    Batch out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = MatX(in[i].rows(), cin_ + cskip_);
      out[i].leftCols(cin_) = in[i];
      out[i].rightCols(cskip_) = store_->saved[id_][i];
    }
    return out;
  }

  Batch backward(const GeoBatch&, const Batch& dout) override {
    Batch din(dout.size());
    store_->dsaved[id_].resize(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
      din[i] = dout[i].leftCols(cin_);
      store_->dsaved[id_][i] = dout[i].rightCols(cskip_);
    }
    return din;
  }

 private:
  int id_;
  SkipStore* store_;
  Index cin_, cskip_;
};

// Residual block: x + norm2(conv2(act(norm1(conv1(x))))).
class ResBlock : public Layer {
 public:
  ResBlock(std::unique_ptr<Layer> c1, std::unique_ptr<Layer> n1,
           std::unique_ptr<Layer> act, std::unique_ptr<Layer> c2,
           std::unique_ptr<Layer> n2) {
    seq_.push_back(std::move(c1));
    seq_.push_back(std::move(n1));
    seq_.push_back(std::move(act));
    seq_.push_back(std::move(c2));
    seq_.push_back(std::move(n2));
  }

  Batch forward(const GeoBatch& geo, const Batch& in, bool training) override {
    Batch x = in;
    for (auto& l : seq_) x = l->forward(geo, x, training);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += in[i];
    return x;
  }

  Batch backward(const GeoBatch& geo, const Batch& dout) override {
    Batch d = dout;
    for (auto it = seq_.rbegin(); it != seq_.rend(); ++it)
      d = (*it)->backward(geo, d);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i];
    return d;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override {
    static const char* names[5] = {"conv1", "norm1", "act", "conv2", "norm2"};
    for (int i = 0; i < 5; ++i)
      seq_[i]->collect_params(prefix + "." + names[i], out);
  }

 private:
  std::vector<std::unique_ptr<Layer>> seq_;
};

}  // namespace

// ---- model -----------------------------------------------------------------

struct Model::Impl {
  std::vector<std::pair<std::string, std::unique_ptr<Layer>>> seq;
  SkipStore store;
  bool nonlin_enabled = true;
};

Model::~Model() = default;

Index Model::input_channels() const {
  return 21 + 1 + (config_.with_bc ? 1 : 0);
}

Model::Model(const ModelConfig& config)
    : config_(config), impl_(std::make_unique<Impl>()) {
  const auto& c = config_;
  if (c.levels < 1 || c.levels > 3 ||
      static_cast<int>(c.widths.size()) != c.levels || c.blocks < 0 ||
      c.time_steps < 1 || c.max_order < 0 ||
      c.nonlin_samples < 2 * c.max_order + 1)
    throw ConfigInvalid("ModelConfig: invalid architecture parameters");
  for (int w : c.widths)
    if (w < 1) throw ConfigInvalid("ModelConfig: widths must be positive");

  std::mt19937_64 rng(c.seed);
  impl_->store.saved.resize(c.levels);
  impl_->store.dsaved.resize(c.levels);
  auto& seq = impl_->seq;
  const bool* flag = &impl_->nonlin_enabled;

  if (c.conv_kind == ConvKind::gem) {
    bases_ = std::make_shared<KernelBasisSet>(c.max_order);
    input_sig_ =
        IrrepSignature({{0, c.with_bc ? 9 : 8}, {1, 4}, {2, 3}});
    std::vector<IrrepSignature> sigs;
    for (int l = 0; l < c.levels; ++l)
      sigs.push_back(IrrepSignature::regular(c.max_order, c.widths[l]));
    const IrrepSignature head_sig({{0, c.time_steps}, {1, c.time_steps}});

    auto conv = [&](int level, const IrrepSignature& a,
                    const IrrepSignature& b) {
      return std::make_unique<GemConvLayer>(level, a, b, *bases_, rng);
    };
    auto block = [&](int level, const IrrepSignature& s) {
      return std::make_unique<ResBlock>(
          conv(level, s, s), std::make_unique<EquivNormLayer>(s),
          std::make_unique<RegularNonlinLayer>(s, c.nonlin_samples, flag),
          conv(level, s, s), std::make_unique<EquivNormLayer>(s));
    };

    seq.emplace_back("stem", conv(0, input_sig_, sigs[0]));
    for (int l = 0; l < c.levels; ++l) {
      for (int b = 0; b < c.blocks; ++b)
        seq.emplace_back("enc" + std::to_string(l) + ".block" +
                             std::to_string(b),
                         block(l, sigs[l]));
      if (l < c.levels - 1) {
        seq.emplace_back("skip" + std::to_string(l),
                         std::make_unique<SkipSaveLayer>(l, &impl_->store));
        seq.emplace_back("pool" + std::to_string(l),
                         std::make_unique<GemPoolLayer>(l, sigs[l]));
        seq.emplace_back("lift" + std::to_string(l),
                         conv(l + 1, sigs[l], sigs[l + 1]));
      }
    }
    for (int l = c.levels - 2; l >= 0; --l) {
      seq.emplace_back("unpool" + std::to_string(l),
                       std::make_unique<GemUnpoolLayer>(l, sigs[l + 1]));
      seq.emplace_back("cat" + std::to_string(l),
                       std::make_unique<GemConcatLayer>(l, &impl_->store,
                                                        sigs[l + 1], sigs[l]));
      seq.emplace_back("fuse" + std::to_string(l),
                       conv(l, concat(sigs[l + 1], sigs[l]), sigs[l]));
      for (int b = 0; b < c.blocks; ++b)
        seq.emplace_back("dec" + std::to_string(l) + ".block" +
                             std::to_string(b),
                         block(l, sigs[l]));
    }
    seq.emplace_back("head_conv", conv(0, sigs[0], head_sig));
    seq.emplace_back("head", std::make_unique<HeadLayer>(c.time_steps));
  } else {
    const Index cin = input_channels();
    const Index cout_final = 3 * c.time_steps;
    auto conv = [&](int level, Index a, Index b) -> std::unique_ptr<Layer> {
      switch (c.conv_kind) {
        case ConvKind::isotropic:
          return std::make_unique<IsoConvLayer>(level, a, b, rng);
        case ConvKind::attention:
          return std::make_unique<AttnConvLayer>(level, a, b, rng);
        case ConvKind::pointnet:
          return std::make_unique<PointnetConvLayer>(level, a, b,
                                                     std::max<Index>(a, b),
                                                     rng);
        default:
          throw ConfigInvalid("unexpected conv kind");
      }
    };
    auto block = [&](int level, Index ch) {
      return std::make_unique<ResBlock>(
          conv(level, ch, ch), std::make_unique<PlainNormLayer>(ch),
          std::make_unique<ReluLayer>(flag), conv(level, ch, ch),
          std::make_unique<PlainNormLayer>(ch));
    };
    auto pool = [&](int level) -> std::unique_ptr<Layer> {
      if (c.conv_kind == ConvKind::pointnet)
        return std::make_unique<MaxPoolLayer>(level);
      return std::make_unique<MeanPoolLayer>(level);
    };
    auto unpool = [&](int level) -> std::unique_ptr<Layer> {
      if (c.conv_kind == ConvKind::pointnet)
        return std::make_unique<IdwUnpoolLayer>(level);
      return std::make_unique<BroadcastUnpoolLayer>(level);
    };

    seq.emplace_back("stem", conv(0, cin, c.widths[0]));
    for (int l = 0; l < c.levels; ++l) {
      for (int b = 0; b < c.blocks; ++b)
        seq.emplace_back("enc" + std::to_string(l) + ".block" +
                             std::to_string(b),
                         block(l, c.widths[l]));
      if (l < c.levels - 1) {
        seq.emplace_back("skip" + std::to_string(l),
                         std::make_unique<SkipSaveLayer>(l, &impl_->store));
        seq.emplace_back("pool" + std::to_string(l), pool(l));
        seq.emplace_back("lift" + std::to_string(l),
                         conv(l + 1, c.widths[l], c.widths[l + 1]));
      }
    }
    for (int l = c.levels - 2; l >= 0; --l) {
      seq.emplace_back("unpool" + std::to_string(l), unpool(l));
      seq.emplace_back("cat" + std::to_string(l),
                       std::make_unique<PlainConcatLayer>(
                           l, &impl_->store, c.widths[l + 1], c.widths[l]));
      seq.emplace_back("fuse" + std::to_string(l),
                       conv(l, c.widths[l + 1] + c.widths[l], c.widths[l]));
      for (int b = 0; b < c.blocks; ++b)
        seq.emplace_back("dec" + std::to_string(l) + ".block" +
                             std::to_string(b),
                         block(l, c.widths[l]));
    }
    seq.emplace_back("head_conv", conv(0, c.widths[0], cout_final));
  }
}

Batch Model::forward(const GeoBatch& geo, const Batch& inputs, bool training) {
  if (inputs.size() != geo.size())
    throw ShapeMismatch("Model: geometry/input batch size mismatch");
  for (const SampleGeometry* g : geo)
    if (g->hierarchy.level_count() < config_.levels)
      throw LevelMismatch("Model: hierarchy shallower than model levels");
  Batch x = inputs;
  for (auto& [name, layer] : impl_->seq) x = layer->forward(geo, x, training);
  return x;
}

std::vector<std::pair<std::string, Batch>> Model::forward_trace(
    const GeoBatch& geo, const Batch& inputs) {
  if (inputs.size() != geo.size())
    throw ShapeMismatch("Model: geometry/input batch size mismatch");
  for (const SampleGeometry* g : geo)
    if (g->hierarchy.level_count() < config_.levels)
      throw LevelMismatch("Model: hierarchy shallower than model levels");
  std::vector<std::pair<std::string, Batch>> trace;
  Batch x = inputs;
  for (auto& [name, layer] : impl_->seq) {
    x = layer->forward(geo, x, false);
    trace.emplace_back(name, x);
  }
  return trace;
}

Batch Model::backward(const GeoBatch& geo, const Batch& dout) {
  Batch d = dout;
  for (auto it = impl_->seq.rbegin(); it != impl_->seq.rend(); ++it)
    d = it->second->backward(geo, d);
  return d;
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (auto& [name, layer] : impl_->seq) layer->collect_params(name, out);
  return out;
}

Index Model::parameter_count() {
  Index total = 0;
  for (const ParamRef& p : parameters()) total += p.value->size();
  return total;
}

void Model::zero_grads() {
  for (ParamRef& p : parameters()) p.grad->setZero();
}

void Model::set_nonlinearity_enabled(bool enabled) {
  impl_->nonlin_enabled = enabled;
}

// ---- loss, optimizer -------------------------------------------------------

double l1_loss(const Batch& pred, const Batch& label, Batch* dpred) {
  if (pred.size() != label.size() || pred.empty())
    throw ShapeMismatch("l1_loss: batch size mismatch");
  Index total = 0;
  for (const MatX& m : pred) total += m.size();
  double loss = 0.0;
  if (dpred) dpred->resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != label[i].rows() || pred[i].cols() != label[i].cols())
      throw ShapeMismatch("l1_loss: sample shape mismatch");
    loss += (pred[i] - label[i]).cwiseAbs().sum();
    if (dpred) {
      (*dpred)[i] = MatX::Zero(pred[i].rows(), pred[i].cols());
      for (Index r = 0; r < pred[i].rows(); ++r)
        for (Index c = 0; c < pred[i].cols(); ++c) {
          const double d = pred[i](r, c) - label[i](r, c);
          // subgradient at the kink is 0
          (*dpred)[i](r, c) = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        }
      (*dpred)[i] /= static_cast<double>(total);
    }
  }
  return loss / static_cast<double>(total);
}

Adam::Adam(double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

void Adam::step(const std::vector<ParamRef>& params) {
  if (m.size() != params.size()) {
    m.clear();
    v.clear();
    for (const ParamRef& p : params) {
      m.push_back(MatX::Zero(p.value->rows(), p.value->cols()));
      v.push_back(MatX::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const MatX& g = *params[i].grad;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    const MatX mhat = m[i] / bc1;
    const MatX vhat = v[i] / bc2;
    *params[i].value -=
        lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  }
}

// ---- checkpoints -----------------------------------------------------------

Checkpoint snapshot(Model& model, const Adam& opt, const std::string& rng_state,
                    const std::vector<HistoryRow>& history) {
  Checkpoint c;
  c.config_json = model.config().to_json();
  for (const ParamRef& p : model.parameters()) {
    c.names.push_back(p.name);
    c.values.push_back(*p.value);
  }
  c.adam_m = opt.m;
  c.adam_v = opt.v;
  c.adam_step = opt.t;
  c.rng_state = rng_state;
  c.history = history;
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, Model& model) {
  auto params = model.parameters();
  if (params.size() != ckpt.names.size())
    throw IoError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt.names[i])
      throw IoError("checkpoint: parameter name mismatch at " +
                    params[i].name);
    if (params[i].value->rows() != ckpt.values[i].rows() ||
        params[i].value->cols() != ckpt.values[i].cols())
      throw IoError("checkpoint: shape mismatch at " + params[i].name);
    *params[i].value = ckpt.values[i];
  }
}

namespace {
constexpr char kMagic[9] = "GEMCKP01";

void write_mats(std::ofstream& out, const std::vector<MatX>& mats) {
  for (const MatX& m : mats)
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_mats(std::ifstream& in, std::vector<MatX>& mats) {
  for (MatX& m : mats)
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["version"] = 1;
  header["config"] = json::parse(ckpt.config_json);
  json params = json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i)
    params.push_back({{"name", ckpt.names[i]},
                      {"rows", ckpt.values[i].rows()},
                      {"cols", ckpt.values[i].cols()}});
  header["params"] = params;
  header["adam_step"] = ckpt.adam_step;
  header["adam_state"] = !ckpt.adam_m.empty();
  header["rng"] = ckpt.rng_state;
  json hist = json::array();
  for (const HistoryRow& r : ckpt.history)
    hist.push_back({{"epoch", r.epoch},
                    {"split", r.split},
                    {"loss", r.loss},
                    {"nmae", r.nmae},
                    {"eps", r.eps}});
  header["history"] = hist;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  write_mats(out, ckpt.values);
  write_mats(out, ckpt.adam_m);
  write_mats(out, ckpt.adam_v);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw IoError("checkpoint: bad magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  const json header = json::parse(htext);
  if (header.at("version").get<int>() != 1)
    throw IoError("checkpoint: unsupported version");

  Checkpoint c;
  c.config_json = header.at("config").dump();
  for (const json& p : header.at("params")) {
    c.names.push_back(p.at("name").get<std::string>());
    c.values.emplace_back(p.at("rows").get<Index>(), p.at("cols").get<Index>());
  }
  c.adam_step = header.at("adam_step").get<std::int64_t>();
  c.rng_state = header.at("rng").get<std::string>();
  for (const json& r : header.at("history"))
    c.history.push_back({r.at("epoch").get<int>(),
                         r.at("split").get<std::string>(),
                         r.at("loss").get<double>(),
                         r.at("nmae").get<double>(),
                         r.at("eps").get<double>()});
  const bool has_adam = header.at("adam_state").get<bool>();
  if (has_adam) {
    for (const MatX& m : c.values) {
      c.adam_m.emplace_back(m.rows(), m.cols());
      c.adam_v.emplace_back(m.rows(), m.cols());
    }
  }
  read_mats(in, c.values);
  read_mats(in, c.adam_m);
  read_mats(in, c.adam_v);
  if (!in) throw IoError("checkpoint: truncated file " + path);
  return c;
}

// ---- training --------------------------------------------------------------

DataSplit split_dataset(std::size_t count, std::uint64_t seed) {
  std::vector<int> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  DataSplit s;
  const std::size_t n_train =
      std::max<std::size_t>(1, static_cast<std::size_t>(0.8 * count));
  const std::size_t n_val = static_cast<std::size_t>(0.1 * count);
  for (std::size_t i = 0; i < count; ++i) {
    if (i < n_train)
      s.train.push_back(idx[i]);
    else if (i < n_train + n_val)
      s.val.push_back(idx[i]);
    else
      s.test.push_back(idx[i]);
  }
  return s;
}

namespace {

bool all_finite(const MatX& m) { return m.allFinite(); }

struct EvalResult {
  double loss;
  Metrics metrics;
};

EvalResult evaluate(Model& model, const std::vector<Sample>& dataset,
                    const std::vector<int>& indices, int batch_size) {
  Batch preds, labels;
  double loss = 0.0;
  Index total = 0;
  for (std::size_t start = 0; start < indices.size();
       start += static_cast<std::size_t>(batch_size)) {
    GeoBatch geo;
    Batch in, lab;
    for (std::size_t i = start;
         i < std::min(indices.size(), start + batch_size); ++i) {
      const Sample& s = dataset[indices[i]];
      geo.push_back(s.geo.get());
      in.push_back(s.input);
      lab.push_back(s.label);
    }
    Batch out = model.forward(geo, in, false);
    for (std::size_t i = 0; i < out.size(); ++i) {
      loss += (out[i] - lab[i]).cwiseAbs().sum();
      total += out[i].size();
      preds.push_back(std::move(out[i]));
      labels.push_back(lab[i]);
    }
  }
  EvalResult r;
  r.loss = loss / static_cast<double>(total);
  r.metrics = compute_metrics(preds, labels);
  return r;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& dataset,
                  const TrainConfig& config) {
  if (dataset.empty()) throw ConfigInvalid("train: empty dataset");
  const DataSplit split = split_dataset(dataset.size(), config.seed);
  std::mt19937_64 rng(config.seed + 1);
  Adam opt(config.lr);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<HistoryRow> history;
  {
    std::ostringstream ss;
    ss << rng;
    result.best = snapshot(model, opt, ss.str(), history);
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order = split.train;
    std::shuffle(order.begin(), order.end(), rng);
    Batch train_preds, train_labels;
    double train_loss = 0.0;
    Index train_total = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      GeoBatch geo;
      Batch in, lab;
      for (std::size_t i = start;
           i < std::min(order.size(), start + config.batch_size); ++i) {
        const Sample& s = dataset[order[i]];
        geo.push_back(s.geo.get());
        in.push_back(s.input);
        lab.push_back(s.label);
      }
      model.zero_grads();
      Batch pred = model.forward(geo, in, true);
      Batch dpred;
      const double loss = l1_loss(pred, lab, &dpred);
      if (!std::isfinite(loss)) {
        apply_checkpoint(result.best, model);
        throw NonFinite("train: loss diverged at epoch " +
                        std::to_string(epoch));
      }
      model.backward(geo, dpred);
      auto params = model.parameters();
      for (const ParamRef& p : params)
        if (!all_finite(*p.grad)) {
          apply_checkpoint(result.best, model);
          throw NonFinite("train: non-finite gradient in " + p.name);
        }
      opt.step(params);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        train_loss += (pred[i] - lab[i]).cwiseAbs().sum();
        train_total += pred[i].size();
        train_preds.push_back(std::move(pred[i]));
        train_labels.push_back(lab[i]);
      }
    }
    const Metrics train_metrics = compute_metrics(train_preds, train_labels);
    history.push_back({epoch, "train",
                       train_loss / static_cast<double>(train_total),
                       train_metrics.nmae, train_metrics.eps});

    const std::vector<int>& val_idx =
        split.val.empty() ? split.train : split.val;
    const EvalResult val =
        evaluate(model, dataset, val_idx, config.batch_size);
    history.push_back({epoch, "val", val.loss, val.metrics.nmae,
                       val.metrics.eps});
    if (val.loss < best_val) {
      best_val = val.loss;
      std::ostringstream ss;
      ss << rng;
      result.best = snapshot(model, opt, ss.str(), history);
    }
  }

  result.best.history = history;
  result.history = history;
  result.best_val_loss = best_val;
  apply_checkpoint(result.best, model);
  const std::vector<int>& test_idx =
      split.test.empty() ? (split.val.empty() ? split.train : split.val)
                         : split.test;
  result.test_metrics =
      evaluate(model, dataset, test_idx, config.batch_size).metrics;
  return result;
}

Batch predict(Model& model, const std::vector<Sample>& samples) {
  Batch out;
  for (const Sample& s : samples) {
    Batch one =
        model.forward({s.geo.get()}, {s.input}, false);
    out.push_back(std::move(one[0]));
  }
  return out;
}

}  // namespace gem::nn
