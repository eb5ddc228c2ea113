#pragma once

#include "gem/nn.hpp"

namespace gem {

// Two-path comparison: transform-then-evaluate against evaluate-then-
// transform. Relative discrepancies use |a - b| / max(scale, 1e-12) with the
// largest output row norm as the scale.
struct TransformReport {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double max_rel = 0.0;
  double mean_rel = 0.0;
  // per-layer discrepancy of the per-vertex row norms, which are invariant
  // under both gauge changes and rigid motions for equivariant layers
  std::vector<std::pair<std::string, double>> layers;

  std::string to_json() const;
};

// Evaluate the model on the mesh and on its copy moved by (rotation,
// translation); geometry, gauges, and features are rebuilt from scratch on
// the moved mesh. The final outputs are compared after rotating the
// reference prediction's ambient 3-vectors.
TransformReport check_transform(nn::Model& model, const Mesh& mesh,
                                const GeometryConfig& config,
                                const Mat3& rotation, const Vec3& translation);

// check_transform with a random rigid motion drawn from the seed.
TransformReport check_se3(nn::Model& model, const Mesh& mesh,
                          const GeometryConfig& config, std::uint64_t seed);

// Re-derives every gauge from a different reference direction seed on the
// same mesh; ambient outputs must not depend on the gauge choice.
TransformReport check_gauge(nn::Model& model, const Mesh& mesh,
                            const GeometryConfig& config, std::uint64_t seed);

// Midpoint subdivision: V' = V + E, 4x faces, geometric boundary preserved.
// Inlet/outlet markers extend to midpoints of same-marked edges.
Mesh remesh_refine(const Mesh& mesh);

// Seeded random vertex subset with vertex normals carried over; no
// triangulation survives, the result feeds the graph-only geometry pipeline.
struct ResampledSurface {
  MatX positions;
  MatX normals;
  std::vector<Index> inlet;  // remapped surviving inlet vertices
  std::vector<Index> kept;   // original vertex ids, ascending
};
ResampledSurface remesh_resample(const Mesh& mesh, double keep_fraction,
                                 std::uint64_t seed);

// Receptive-field reachability through composed filter supports. A conv at
// level l grows the mask by one ring of the level graph; pool l marks the
// coarse cluster of every reached fine vertex; unpool l marks every fine
// vertex whose cluster is reached.
enum class FieldOp { conv, pool, unpool };

std::vector<std::pair<FieldOp, int>> model_op_sequence(
    const nn::ModelConfig& config);

std::vector<char> receptive_field(
    const std::vector<std::pair<FieldOp, int>>& ops, const SampleGeometry& geo,
    Index seed_vertex);

std::vector<char> receptive_field(const nn::ModelConfig& config,
                                  const SampleGeometry& geo,
                                  Index seed_vertex);

}  // namespace gem
