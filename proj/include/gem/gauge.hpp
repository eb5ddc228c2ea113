#pragma once

#include <optional>

#include "gem/mesh.hpp"

namespace gem {

// Per-vertex orthonormal tangent frames (e1, e2, n) with e1 x e2 = n, plus
// log-map polar coordinates and parallel-transport angles for every directed
// neighbor pair of a radius graph. Edge data is aligned with the graph's
// adjacency lists: entry j of vertex p refers to graph.neighbors(p)[j].
struct GaugeAtlas {
  MatX e1, e2, normal;  // each V x 3
  std::vector<std::vector<double>> log_angle;   // theta_pq in [0, 2pi)
  std::vector<std::vector<double>> log_radius;  // ||x_q - x_p||
  std::vector<std::vector<double>> transport;   // g_{q->p} in [0, 2pi)

  Index vertex_count() const { return e1.rows(); }
  Vec3 frame_e1(Index v) const { return e1.row(v).transpose(); }
  Vec3 frame_e2(Index v) const { return e2.row(v).transpose(); }
  Vec3 frame_n(Index v) const { return normal.row(v).transpose(); }
};

// Tangent frames from normals. The reference direction at each vertex is its
// first incident-edge direction; with a seed, frames are additionally rotated
// by a per-vertex random angle (for gauge-independence tests).
GaugeAtlas build_gauges(const MatX& positions, const MatX& normals,
                        const NeighborGraph& graph,
                        std::optional<std::uint64_t> seed = std::nullopt);

// (theta, r) of q in the tangent plane at p: theta = atan2(v.e2, v.e1) with
// v the projection of x_q - x_p. Throws ZeroProjection when the chord is
// parallel to the normal at p.
std::pair<double, double> log_map(const Vec3& xp, const Vec3& xq,
                                  const Vec3& e1, const Vec3& e2,
                                  const Vec3& n);

// g_{q->p} = (theta_pq + pi) - theta_qp mod 2pi.
double transport_angle(double theta_pq, double theta_qp);

// Rotates the tangent frame at every vertex by the given angle about its
// normal and recomputes all edge angles.
GaugeAtlas rotate_gauges(const GaugeAtlas& atlas, const MatX& positions,
                         const NeighborGraph& graph, const VecX& angles);

}  // namespace gem
