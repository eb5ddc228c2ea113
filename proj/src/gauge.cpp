#include "gem/gauge.hpp"

#include <cmath>
#include <random>

namespace gem {

namespace {

// Fills log/transport tables from positions and frames.
void derive_edge_angles(GaugeAtlas& atlas, const MatX& positions,
                        const NeighborGraph& graph) {
  const Index n = positions.rows();
  atlas.log_angle.assign(static_cast<std::size_t>(n), {});
  atlas.log_radius.assign(static_cast<std::size_t>(n), {});
  atlas.transport.assign(static_cast<std::size_t>(n), {});
  for (Index p = 0; p < n; ++p) {
    const auto& nbrs = graph.neighbors(p);
    atlas.log_angle[p].resize(nbrs.size());
    atlas.log_radius[p].resize(nbrs.size());
    atlas.transport[p].resize(nbrs.size());
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
      const Index q = nbrs[j];
      auto [theta_pq, r] = log_map(positions.row(p), positions.row(q),
                                   atlas.frame_e1(p), atlas.frame_e2(p),
                                   atlas.frame_n(p));
      auto [theta_qp, r2] = log_map(positions.row(q), positions.row(p),
                                    atlas.frame_e1(q), atlas.frame_e2(q),
                                    atlas.frame_n(q));
      atlas.log_angle[p][j] = theta_pq;
      atlas.log_radius[p][j] = r;
      atlas.transport[p][j] = transport_angle(theta_pq, theta_qp);
    }
  }
}

}  // namespace

std::pair<double, double> log_map(const Vec3& xp, const Vec3& xq,
                                  const Vec3& e1, const Vec3& e2,
                                  const Vec3& n) {
  const Vec3 chord = xq - xp;
  const Vec3 v = chord - chord.dot(n) * n;
  if (v.norm() < 1e-12 * chord.norm())
    throw ZeroProjection("chord parallel to the vertex normal");
  return {wrap_angle(std::atan2(v.dot(e2), v.dot(e1))), chord.norm()};
}

double transport_angle(double theta_pq, double theta_qp) {
  return wrap_angle(theta_pq + kPi - theta_qp);
}

GaugeAtlas build_gauges(const MatX& positions, const MatX& normals,
                        const NeighborGraph& graph,
                        std::optional<std::uint64_t> seed) {
  const Index n = positions.rows();
  GaugeAtlas atlas;
  atlas.normal = normals;
  atlas.e1.resize(n, 3);
  atlas.e2.resize(n, 3);

  std::optional<std::mt19937_64> rng;
  if (seed) rng.emplace(*seed);

  for (Index p = 0; p < n; ++p) {
    const Vec3 np = normals.row(p).transpose();
    Vec3 e1;
    bool found = false;
    for (Index q : graph.neighbors(p)) {
      const Vec3 chord = (positions.row(q) - positions.row(p)).transpose();
      Vec3 t = chord - chord.dot(np) * np;
      if (t.norm() > 1e-10 * chord.norm()) {
        e1 = t.normalized();
        found = true;
        break;
      }
    }
    if (!found)
      throw DegenerateTangent("vertex " + std::to_string(p) +
                              ": all incident edges parallel to the normal");
    Vec3 e2 = np.cross(e1);
    if (rng) {
      std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
      const double a = uniform(*rng);
      const Vec3 r1 = std::cos(a) * e1 + std::sin(a) * e2;
      const Vec3 r2 = -std::sin(a) * e1 + std::cos(a) * e2;
      e1 = r1;
      e2 = r2;
    }
    atlas.e1.row(p) = e1.transpose();
    atlas.e2.row(p) = e2.transpose();
  }
  derive_edge_angles(atlas, positions, graph);
  return atlas;
}

GaugeAtlas rotate_gauges(const GaugeAtlas& atlas, const MatX& positions,
                         const NeighborGraph& graph, const VecX& angles) {
  GaugeAtlas rotated;
  rotated.normal = atlas.normal;
  rotated.e1.resizeLike(atlas.e1);
  rotated.e2.resizeLike(atlas.e2);
  for (Index p = 0; p < atlas.vertex_count(); ++p) {
    const double a = angles[p];
    const Vec3 e1 = atlas.frame_e1(p);
    const Vec3 e2 = atlas.frame_e2(p);
    rotated.e1.row(p) = (std::cos(a) * e1 + std::sin(a) * e2).transpose();
    rotated.e2.row(p) = (-std::sin(a) * e1 + std::cos(a) * e2).transpose();
  }
  derive_edge_angles(rotated, positions, graph);
  return rotated;
}

}  // namespace gem
