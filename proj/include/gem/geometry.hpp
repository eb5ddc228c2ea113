#pragma once

#include <memory>
#include <optional>

#include "gem/features.hpp"
#include "gem/ops.hpp"
#include "gem/pooling.hpp"

namespace gem {

struct GeometryConfig {
  double radius = 0.0;  // level-0 graph radius; <= 0 means scale * mean edge
  double radius_scale = 2.0;
  std::vector<double> ratios = {1.0, 0.25, 0.0625};
  std::vector<double> radius_factors = {1.0, 2.0, 4.0};  // times level-0 radius
  std::uint64_t fps_seed = 0;
  std::optional<std::uint64_t> gauge_seed;
};

// Everything a model needs about one surface: the pooling hierarchy (level 0
// holds the full graph and atlas), inlet geodesics, and lazily built per-level
// kernel caches.
struct SampleGeometry {
  MatX positions;
  MatX normals;
  Hierarchy hierarchy;
  VecX geodesic;
  std::optional<double> boundary_condition;

  Index vertex_count() const { return positions.rows(); }
  const HierarchyLevel& level(int i) const { return hierarchy.levels[i]; }

  const EdgeBasisCache& cache(int level, const KernelBasisSet& bases) const;

 private:
  mutable std::vector<std::unique_ptr<EdgeBasisCache>> caches_;
};

// Graph, gauges, hierarchy, and geodesics for a mesh. Meshless point sets
// (positions + normals) are supported for resampling checks.
SampleGeometry build_sample_geometry(const MatX& positions, const MatX& normals,
                                     const std::vector<Index>& inlet,
                                     double mean_edge,
                                     const GeometryConfig& config);

SampleGeometry build_sample_geometry(const Mesh& mesh,
                                     const GeometryConfig& config);

// Input features. GEM models consume the irrep field; baseline models the
// flat ambient channels (m1 upper triangle, m2 upper triangle, m3 full,
// geodesic, optional boundary condition).
IrrepField gem_input_features(const SampleGeometry& geo);
MatX baseline_input_features(const SampleGeometry& geo);

}  // namespace gem
