#pragma once

#include "gem/gauge.hpp"
#include "gem/irrep.hpp"
#include "gem/mesh.hpp"

namespace gem {

// Nested vertex subsets with radius graphs, inherited gauges, and a disjoint
// cluster partition per level transition.
struct HierarchyLevel {
  std::vector<Index> vertex_ids;  // into level-0 vertex set, FPS order
  double radius = 0.0;
  MatX positions;  // |V_i| x 3
  NeighborGraph graph;
  GaugeAtlas atlas;
};

struct ClusterMap {
  // For each fine vertex: its coarse cluster (local coarse index) and the
  // transport angle g_{fine->coarse}.
  std::vector<Index> assignment;
  std::vector<double> transport;
  std::vector<std::vector<Index>> members;  // coarse -> fine indices
};

struct Hierarchy {
  std::vector<HierarchyLevel> levels;
  std::vector<ClusterMap> clusters;  // size levels-1

  int level_count() const { return static_cast<int>(levels.size()); }
};

// Deterministic farthest-point sampling; the seed picks the start vertex.
// Returns `count` vertex indices in selection order.
std::vector<Index> farthest_point_sampling(const MatX& positions, Index count,
                                           std::uint64_t seed);

// Subsets by farthest-point sampling at the given ratios (first must be 1.0),
// radius graphs per level, gauges inherited from the level-0 atlas, clusters
// by nearest coarse vertex.
Hierarchy build_hierarchy(const MatX& positions, const GaugeAtlas& atlas0,
                          const NeighborGraph& graph0,
                          const std::vector<double>& ratios,
                          const std::vector<double>& radii,
                          std::uint64_t seed);

// Cluster-mean of transported features, V_i -> V_{i+1}.
IrrepField pool(const IrrepField& field, const Hierarchy& hierarchy,
                int level);

// Each fine vertex receives its coarse vertex's value transported back,
// V_{i+1} -> V_i.
IrrepField unpool(const IrrepField& field, const Hierarchy& hierarchy,
                  int level);

}  // namespace gem
