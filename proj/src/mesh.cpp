#include "gem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace gem {

Mesh build_mesh(const MatX& vertices,
                const Eigen::Matrix<Index, Eigen::Dynamic, 3>& faces,
                std::vector<Index> inlet, std::vector<Index> outlet) {
  if (vertices.rows() == 0) throw Error("build_mesh: empty vertex list");
  if (faces.rows() == 0) throw Error("build_mesh: empty face list");
  const Index nv = vertices.rows();

  for (Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const Index v = faces(f, k);
      if (v < 0 || v >= nv)
        throw Error("build_mesh: face " + std::to_string(f) +
                    " references vertex " + std::to_string(v));
    }
    const Vec3 a = vertices.row(faces(f, 0));
    const Vec3 b = vertices.row(faces(f, 1));
    const Vec3 c = vertices.row(faces(f, 2));
    if ((b - a).cross(c - a).norm() < 1e-14)
      throw DegenerateFace("face " + std::to_string(f) + " has zero area");
  }

  // Directed edge incidence. An interior edge must appear once in each
  // direction; a boundary edge once in total.
  std::map<std::pair<Index, Index>, int> directed;
  for (Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const Index a = faces(f, k);
      const Index b = faces(f, (k + 1) % 3);
      if (++directed[{a, b}] > 1)
        throw InconsistentOrientation(
            "edge (" + std::to_string(a) + "," + std::to_string(b) +
            ") traversed twice in the same direction (face " +
            std::to_string(f) + ")");
    }
  }
  std::map<std::pair<Index, Index>, int> undirected;
  for (const auto& [e, n] : directed) {
    auto key = std::minmax(e.first, e.second);
    if (++undirected[{key.first, key.second}] > 2)
      throw NonManifold("edge (" + std::to_string(key.first) + "," +
                        std::to_string(key.second) +
                        ") shared by more than 2 faces");
  }

  Mesh mesh;
  mesh.vertices = vertices;
  mesh.faces = faces;
  mesh.inlet = std::move(inlet);
  mesh.outlet = std::move(outlet);
  return mesh;
}

MatX vertex_normals(const Mesh& mesh) {
  MatX normals = MatX::Zero(mesh.vertex_count(), 3);
  for (Index f = 0; f < mesh.face_count(); ++f) {
    const Vec3 a = mesh.position(mesh.faces(f, 0));
    const Vec3 b = mesh.position(mesh.faces(f, 1));
    const Vec3 c = mesh.position(mesh.faces(f, 2));
    const Vec3 weighted = 0.5 * (b - a).cross(c - a);  // area * unit normal
    for (int k = 0; k < 3; ++k)
      normals.row(mesh.faces(f, k)) += weighted.transpose();
  }
  for (Index v = 0; v < mesh.vertex_count(); ++v) {
    const double n = normals.row(v).norm();
    if (n < 1e-14)
      throw ZeroNormal("vertex " + std::to_string(v) +
                       ": incident face normals cancel");
    normals.row(v) /= n;
  }
  return normals;
}

NeighborGraph radius_graph(const MatX& positions, double r) {
  if (r <= 0.0) throw Error("radius_graph: r must be positive");
  const Index n = positions.rows();
  NeighborGraph graph;
  graph.radius = r;
  graph.adjacency.resize(static_cast<std::size_t>(n));

  // Uniform-grid binning; cell size r so candidates are in the 27 cells.
  const double cell = r;
  const Vec3 origin = positions.colwise().minCoeff().transpose();
  auto cell_of = [&](Index v) {
    Eigen::Array3i c;
    for (int k = 0; k < 3; ++k)
      c[k] = static_cast<int>(std::floor((positions(v, k) - origin[k]) / cell));
    return c;
  };
  std::map<std::array<int, 3>, std::vector<Index>> bins;
  for (Index v = 0; v < n; ++v) {
    const auto c = cell_of(v);
    bins[{c[0], c[1], c[2]}].push_back(v);
  }
  const double r2 = r * r;
  for (Index v = 0; v < n; ++v) {
    const auto c = cell_of(v);
    auto& adj = graph.adjacency[v];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = bins.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == bins.end()) continue;
          for (Index q : it->second) {
            if (q == v) continue;
            if ((positions.row(q) - positions.row(v)).squaredNorm() <= r2)
              adj.push_back(q);
          }
        }
    std::sort(adj.begin(), adj.end());
    if (adj.empty())
      throw DisconnectedNeighborhood("vertex " + std::to_string(v) +
                                     " has no neighbors within r=" +
                                     std::to_string(r));
  }
  return graph;
}

NeighborGraph drop_normal_chords(const NeighborGraph& graph,
                                 const MatX& positions, const MatX& normals,
                                 double tol) {
  const Index n = positions.rows();
  NeighborGraph out;
  out.radius = graph.radius;
  out.adjacency.resize(static_cast<std::size_t>(n));
  // Degeneracy at either endpoint kills the edge at both, keeping the
  // adjacency symmetric. The tolerance sits orders of magnitude above float
  // noise and below genuine tangential fractions, so inclusion is stable
  // under rigid motions.
  auto degenerate = [&](Index p, Index q) {
    const Vec3 chord = (positions.row(q) - positions.row(p)).transpose();
    const Vec3 np = normals.row(p).transpose();
    return (chord - chord.dot(np) * np).norm() < tol * chord.norm();
  };
  for (Index p = 0; p < n; ++p) {
    for (Index q : graph.neighbors(p))
      if (!degenerate(p, q) && !degenerate(q, p))
        out.adjacency[p].push_back(q);
    if (out.adjacency[p].empty())
      throw DisconnectedNeighborhood(
          "vertex " + std::to_string(p) +
          ": every neighbor chord is parallel to a vertex normal");
  }
  return out;
}

VecX geodesic_inlet_distance(const MatX& positions, const NeighborGraph& graph,
                             const std::vector<Index>& inlet) {
  if (inlet.empty()) throw NoInlet("no inlet vertices marked");
  const Index n = positions.rows();
  VecX dist = VecX::Constant(n, std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, Index>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  for (Index v : inlet) {
    dist[v] = 0.0;
    queue.push({0.0, v});
  }
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (Index q : graph.neighbors(v)) {
      const double nd = d + (positions.row(q) - positions.row(v)).norm();
      if (nd < dist[q]) {
        dist[q] = nd;
        queue.push({nd, q});
      }
    }
  }
  for (Index v = 0; v < n; ++v)
    if (!std::isfinite(dist[v]))
      throw UnreachableVertex("vertex " + std::to_string(v) +
                              " unreachable from inlet");
  return dist;
}

double mean_edge_length(const Mesh& mesh) {
  double total = 0.0;
  Index count = 0;
  for (Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const Index a = mesh.faces(f, k);
      const Index b = mesh.faces(f, (k + 1) % 3);
      if (a < b) {
        total += (mesh.position(a) - mesh.position(b)).norm();
        ++count;
      }
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace gem
