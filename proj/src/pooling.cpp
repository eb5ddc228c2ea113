#include "gem/pooling.hpp"

#include <cmath>
#include <limits>

namespace gem {

std::vector<Index> farthest_point_sampling(const MatX& positions, Index count,
                                           std::uint64_t seed) {
  const Index n = positions.rows();
  if (n == 0) throw EmptyLevel("farthest_point_sampling: no vertices");
  if (count < 1 || count > n)
    throw ConfigInvalid("farthest_point_sampling: count out of range");
  std::vector<Index> picked;
  picked.reserve(count);
  const Index start = static_cast<Index>(seed % static_cast<std::uint64_t>(n));
  picked.push_back(start);
  // Distances are quantized before comparison so that exact geometric ties
  // (symmetric meshes) resolve by vertex index regardless of the float noise
  // a rigid motion introduces; greedy selection is chaotic otherwise.
  const double diag = (positions.colwise().maxCoeff() -
                       positions.colwise().minCoeff())
                          .norm();
  const double quantum = std::max(diag, 1.0) * 1e-9;
  auto bin = [&](double d) {
    return static_cast<std::int64_t>(std::floor(d / quantum));
  };
  VecX min_dist(n);
  for (Index v = 0; v < n; ++v)
    min_dist[v] = (positions.row(v) - positions.row(start)).norm();
  while (static_cast<Index>(picked.size()) < count) {
    Index best = 0;
    std::int64_t best_bin = -1;
    for (Index v = 0; v < n; ++v) {
      const std::int64_t b = bin(min_dist[v]);
      if (b > best_bin) {  // ties resolve to the lowest index
        best_bin = b;
        best = v;
      }
    }
    picked.push_back(best);
    for (Index v = 0; v < n; ++v)
      min_dist[v] = std::min(min_dist[v],
                             (positions.row(v) - positions.row(best)).norm());
  }
  return picked;
}

namespace {

GaugeAtlas subset_atlas(const GaugeAtlas& atlas0,
                        const std::vector<Index>& ids, const MatX& positions,
                        const NeighborGraph& graph) {
  GaugeAtlas frames;
  const Index n = static_cast<Index>(ids.size());
  frames.e1.resize(n, 3);
  frames.e2.resize(n, 3);
  frames.normal.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    frames.e1.row(i) = atlas0.e1.row(ids[i]);
    frames.e2.row(i) = atlas0.e2.row(ids[i]);
    frames.normal.row(i) = atlas0.normal.row(ids[i]);
  }
  return rotate_gauges(frames, positions, graph, VecX::Zero(n));
}

// Transport angle between a fine vertex's gauge and its coarse vertex's
// gauge; zero when the two are the same level-0 vertex or the chord is
// normal to the tangent plane.
double cluster_transport(const HierarchyLevel& fine,
                         const HierarchyLevel& coarse, Index q, Index c) {
  if (fine.vertex_ids[q] == coarse.vertex_ids[c]) return 0.0;
  const Vec3 xq = fine.positions.row(q).transpose();
  const Vec3 xc = coarse.positions.row(c).transpose();
  try {
    auto [theta_cq, rc] = log_map(xc, xq, coarse.atlas.frame_e1(c),
                                  coarse.atlas.frame_e2(c),
                                  coarse.atlas.frame_n(c));
    auto [theta_qc, rq] =
        log_map(xq, xc, fine.atlas.frame_e1(q), fine.atlas.frame_e2(q),
                fine.atlas.frame_n(q));
    return transport_angle(theta_cq, theta_qc);
  } catch (const ZeroProjection&) {
    return 0.0;
  }
}

}  // namespace

Hierarchy build_hierarchy(const MatX& positions, const GaugeAtlas& atlas0,
                          const NeighborGraph& graph0,
                          const std::vector<double>& ratios,
                          const std::vector<double>& radii,
                          std::uint64_t seed) {
  if (ratios.empty() || ratios.size() != radii.size())
    throw ConfigInvalid("build_hierarchy: ratios/radii size mismatch");
  if (ratios.front() != 1.0)
    throw ConfigInvalid("build_hierarchy: first ratio must be 1.0");
  for (std::size_t i = 1; i < ratios.size(); ++i)
    if (ratios[i] <= 0.0 || ratios[i] > ratios[i - 1])
      throw ConfigInvalid("build_hierarchy: ratios must be non-increasing");

  const Index n0 = positions.rows();
  Hierarchy h;
  {
    HierarchyLevel level0;
    level0.vertex_ids.resize(n0);
    for (Index v = 0; v < n0; ++v) level0.vertex_ids[v] = v;
    level0.radius = radii[0];
    level0.positions = positions;
    level0.graph = graph0;
    level0.atlas = atlas0;
    h.levels.push_back(std::move(level0));
  }

  for (std::size_t i = 1; i < ratios.size(); ++i) {
    const Index count =
        std::max<Index>(1, static_cast<Index>(std::llround(ratios[i] * n0)));
    if (count > h.levels.back().positions.rows())
      throw EmptyLevel("build_hierarchy: level larger than its parent");
    const HierarchyLevel& fine = h.levels.back();
    const std::vector<Index> local =
        farthest_point_sampling(fine.positions, count, seed + i);

    HierarchyLevel level;
    level.radius = radii[i];
    level.positions.resize(count, 3);
    level.vertex_ids.resize(count);
    for (Index k = 0; k < count; ++k) {
      level.positions.row(k) = fine.positions.row(local[k]);
      level.vertex_ids[k] = fine.vertex_ids[local[k]];
    }
    MatX level_normals(count, 3);
    for (Index k = 0; k < count; ++k)
      level_normals.row(k) = atlas0.normal.row(level.vertex_ids[k]);
    level.graph = drop_normal_chords(radius_graph(level.positions, radii[i]),
                                     level.positions, level_normals);
    level.atlas = subset_atlas(atlas0, level.vertex_ids, level.positions,
                               level.graph);

    // nearest-coarse cluster assignment; distances quantized as in the
    // sampling step so ties resolve to the lowest coarse index identically
    // under rigid motions
    ClusterMap cm;
    const Index nf = fine.positions.rows();
    cm.assignment.resize(nf);
    cm.transport.resize(nf);
    cm.members.resize(count);
    const double diag = (fine.positions.colwise().maxCoeff() -
                         fine.positions.colwise().minCoeff())
                            .norm();
    const double quantum = std::max(diag, 1.0) * 1e-9;
    for (Index q = 0; q < nf; ++q) {
      Index best = 0;
      auto best_dist = std::numeric_limits<std::int64_t>::max();
      for (Index c = 0; c < count; ++c) {
        const std::int64_t d = static_cast<std::int64_t>(
            std::floor((fine.positions.row(q) - level.positions.row(c)).norm() /
                       quantum));
        if (d < best_dist) {
          best_dist = d;
          best = c;
        }
      }
      cm.assignment[q] = best;
      cm.members[best].push_back(q);
      cm.transport[q] = cluster_transport(fine, level, q, best);
    }
    h.clusters.push_back(std::move(cm));
    h.levels.push_back(std::move(level));
  }
  return h;
}

IrrepField pool(const IrrepField& field, const Hierarchy& hierarchy,
                int level) {
  if (level < 0 || level + 1 >= hierarchy.level_count())
    throw LevelMismatch("pool: no such level transition");
  const ClusterMap& cm = hierarchy.clusters[level];
  if (field.vertex_count() !=
      static_cast<Index>(cm.assignment.size()))
    throw LevelMismatch("pool: field size does not match the fine level");
  const Index nc = static_cast<Index>(cm.members.size());
  IrrepField out{field.signature, MatX::Zero(nc, field.signature.dim())};
  for (Index c = 0; c < nc; ++c) {
    if (cm.members[c].empty())
      throw EmptyNeighborhood("pool: empty cluster " + std::to_string(c));
    MatX buf(1, field.signature.dim());
    for (Index q : cm.members[c]) {
      buf.row(0) = field.values.row(q);
      apply_rep(field.signature, cm.transport[q], buf, 0);
      out.values.row(c) += buf.row(0);
    }
    out.values.row(c) /= static_cast<double>(cm.members[c].size());
  }
  return out;
}

IrrepField unpool(const IrrepField& field, const Hierarchy& hierarchy,
                  int level) {
  if (level < 0 || level + 1 >= hierarchy.level_count())
    throw LevelMismatch("unpool: no such level transition");
  const ClusterMap& cm = hierarchy.clusters[level];
  if (field.vertex_count() != static_cast<Index>(cm.members.size()))
    throw LevelMismatch("unpool: field size does not match the coarse level");
  const Index nf = static_cast<Index>(cm.assignment.size());
  IrrepField out{field.signature, MatX::Zero(nf, field.signature.dim())};
  for (Index q = 0; q < nf; ++q) {
    out.values.row(q) = field.values.row(cm.assignment[q]);
    apply_rep(field.signature, -cm.transport[q], out.values, q);
  }
  return out;
}

}  // namespace gem
