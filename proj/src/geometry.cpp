#include "gem/geometry.hpp"

namespace gem {

const EdgeBasisCache& SampleGeometry::cache(int level,
                                            const KernelBasisSet& bases) const {
  if (caches_.size() < hierarchy.levels.size())
    caches_.resize(hierarchy.levels.size());
  if (!caches_[level])
    caches_[level] = std::make_unique<EdgeBasisCache>(EdgeBasisCache::build(
        hierarchy.levels[level].graph, hierarchy.levels[level].atlas, bases));
  return *caches_[level];
}

SampleGeometry build_sample_geometry(const MatX& positions, const MatX& normals,
                                     const std::vector<Index>& inlet,
                                     double mean_edge,
                                     const GeometryConfig& config) {
  if (config.ratios.size() != config.radius_factors.size() ||
      config.ratios.empty())
    throw ConfigInvalid("geometry: ratios/radius_factors mismatch");
  SampleGeometry geo;
  geo.positions = positions;
  geo.normals = normals;
  const double r0 =
      config.radius > 0.0 ? config.radius : config.radius_scale * mean_edge;
  const NeighborGraph graph0 =
      drop_normal_chords(radius_graph(positions, r0), positions, normals);
  const GaugeAtlas atlas0 =
      build_gauges(positions, normals, graph0, config.gauge_seed);
  std::vector<double> radii;
  for (double f : config.radius_factors) radii.push_back(f * r0);
  geo.hierarchy = build_hierarchy(positions, atlas0, graph0, config.ratios,
                                  radii, config.fps_seed);
  geo.geodesic = inlet.empty()
                     ? VecX::Zero(positions.rows())
                     : geodesic_inlet_distance(positions, graph0, inlet);
  return geo;
}

SampleGeometry build_sample_geometry(const Mesh& mesh,
                                     const GeometryConfig& config) {
  return build_sample_geometry(mesh.vertices, vertex_normals(mesh), mesh.inlet,
                               mean_edge_length(mesh), config);
}

IrrepField gem_input_features(const SampleGeometry& geo) {
  FeaturePack pack = local_shape_features(
      geo.positions, geo.hierarchy.levels[0].graph, geo.normals);
  pack.geodesic = geo.geodesic;
  pack.boundary_condition = geo.boundary_condition;
  return to_irrep_field(pack, geo.hierarchy.levels[0].atlas);
}

MatX baseline_input_features(const SampleGeometry& geo) {
  FeaturePack pack = local_shape_features(
      geo.positions, geo.hierarchy.levels[0].graph, geo.normals);
  const Index n = pack.vertex_count();
  const bool bc = geo.boundary_condition.has_value();
  MatX out(n, 21 + 1 + (bc ? 1 : 0));
  for (Index p = 0; p < n; ++p) {
    int c = 0;
    for (const Mat3* m : {&pack.m1[p], &pack.m2[p]})
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) out(p, c++) = (*m)(i, j);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out(p, c++) = pack.m3[p](i, j);
    out(p, c++) = geo.geodesic[p];
    if (bc)
      out(p, c++) =
          (*geo.boundary_condition - kBcLow) / (kBcHigh - kBcLow);
  }
  return out;
}

}  // namespace gem
