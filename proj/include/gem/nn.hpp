#pragma once

#include <memory>
#include <string>

#include "gem/geometry.hpp"
#include "gem/metrics.hpp"

namespace gem::nn {

// One matrix per sample; rows = vertices of the sample's current level.
using Batch = std::vector<MatX>;
using GeoBatch = std::vector<const SampleGeometry*>;

struct ParamRef {
  std::string name;
  MatX* value;
  MatX* grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch forward(const GeoBatch& geo, const Batch& in,
                        bool training) = 0;
  virtual Batch backward(const GeoBatch& geo, const Batch& dout) = 0;
  virtual void collect_params(const std::string& prefix,
                              std::vector<ParamRef>& out) {}
};

enum class ConvKind { gem, isotropic, attention, pointnet };
enum class Target { wss, pressure };

std::string to_string(ConvKind k);
ConvKind conv_kind_from_string(const std::string& s);
std::string to_string(Target t);
Target target_from_string(const std::string& s);

struct ModelConfig {
  ConvKind conv_kind = ConvKind::gem;
  int levels = 3;
  // per level: irrep multiplicity (gem) or plain channel count (baselines)
  std::vector<int> widths = {8, 16, 32};
  int blocks = 2;  // residual blocks per level
  int time_steps = 1;
  std::uint64_t seed = 0;
  Target target = Target::wss;
  int max_order = 2;
  int nonlin_samples = 7;  // 2 max_order + 3
  bool with_bc = false;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& json);
};

// Encoder-decoder over the pooling hierarchy: residual blocks per level,
// pool/unpool between levels, copy-and-concatenate skips, output head.
// GEM models flow irrep fields and emit ambient V x 3T vectors; baselines
// flow plain channels and emit 3T channels directly.
class Model {
 public:
  explicit Model(const ModelConfig& config);
  ~Model();
  Model(const Model&) = delete;

  Batch forward(const GeoBatch& geo, const Batch& inputs,
                bool training = false);
  // Accumulates parameter gradients; call zero_grads() between batches.
  Batch backward(const GeoBatch& geo, const Batch& dout);

  // Evaluation-mode forward that records every layer's output, in order.
  std::vector<std::pair<std::string, Batch>> forward_trace(
      const GeoBatch& geo, const Batch& inputs);

  std::vector<ParamRef> parameters();
  Index parameter_count();
  void zero_grads();
  void set_nonlinearity_enabled(bool enabled);

  const ModelConfig& config() const { return config_; }
  const IrrepSignature& input_signature() const { return input_sig_; }
  Index input_channels() const;  // baselines

 private:
  ModelConfig config_;
  IrrepSignature input_sig_;
  std::shared_ptr<const KernelBasisSet> bases_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Mean absolute deviation over every vertex, channel, and sample; the
// subgradient at the kink is 0. Fills dpred when non-null.
double l1_loss(const Batch& pred, const Batch& label, Batch* dpred);

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(const std::vector<ParamRef>& params);

  double lr;
  double beta1, beta2, eps;
  std::int64_t t = 0;
  std::vector<MatX> m, v;  // aligned with the parameter list
};

struct Sample {
  std::shared_ptr<SampleGeometry> geo;
  MatX input;  // V x input channels
  MatX label;  // V x 3T ambient
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 12;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct HistoryRow {
  int epoch;
  std::string split;
  double loss, nmae, eps;
};

struct Checkpoint {
  std::string config_json;
  std::vector<std::string> names;
  std::vector<MatX> values;
  std::vector<MatX> adam_m, adam_v;
  std::int64_t adam_step = 0;
  std::string rng_state;
  std::vector<HistoryRow> history;
};

Checkpoint snapshot(Model& model, const Adam& opt, const std::string& rng_state,
                    const std::vector<HistoryRow>& history);
void apply_checkpoint(const Checkpoint& ckpt, Model& model);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct DataSplit {
  std::vector<int> train, val, test;
};
// Seeded shuffle, 80:10:10.
DataSplit split_dataset(std::size_t count, std::uint64_t seed);

struct TrainResult {
  Checkpoint best;        // best-validation parameters
  double best_val_loss = 0.0;
  Metrics test_metrics;   // of the best checkpoint
  std::vector<HistoryRow> history;
};

// Deterministic given config.seed; the model is left holding the best
// parameters. Throws NonFinite (after preserving the last good state in the
// result) if loss or gradients explode.
TrainResult train(Model& model, const std::vector<Sample>& dataset,
                  const TrainConfig& config);

// Forward a set of samples in evaluation mode and collect predictions.
Batch predict(Model& model, const std::vector<Sample>& samples);

}  // namespace gem::nn
