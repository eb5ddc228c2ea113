#pragma once

#include <array>
#include <optional>

#include "gem/types.hpp"

namespace gem {

// Triangular surface mesh. Positions in mm, faces counterclockwise when
// viewed from outside. Boundary markers identify inlet/outlet rings.
struct Mesh {
  MatX vertices;  // V x 3
  Eigen::Matrix<Index, Eigen::Dynamic, 3> faces;
  std::vector<Index> inlet;
  std::vector<Index> outlet;

  Index vertex_count() const { return vertices.rows(); }
  Index face_count() const { return faces.rows(); }
  Vec3 position(Index v) const { return vertices.row(v).transpose(); }
};

// Radius graph over vertex positions. Adjacency lists are sorted by index
// and exclude the vertex itself.
struct NeighborGraph {
  double radius = 0.0;
  std::vector<std::vector<Index>> adjacency;

  Index vertex_count() const { return static_cast<Index>(adjacency.size()); }
  const std::vector<Index>& neighbors(Index v) const { return adjacency[v]; }
};

// Validates vertices/faces and returns a Mesh. Throws DegenerateFace,
// NonManifold, or InconsistentOrientation naming the offending element.
Mesh build_mesh(const MatX& vertices,
                const Eigen::Matrix<Index, Eigen::Dynamic, 3>& faces,
                std::vector<Index> inlet = {}, std::vector<Index> outlet = {});

// Area-weighted average of incident face normals, normalised to unit length.
MatX vertex_normals(const Mesh& mesh);

// All q with ||x_q - x_p|| <= r, q != p. Throws DisconnectedNeighborhood
// if any vertex ends up isolated.
NeighborGraph radius_graph(const MatX& positions, double r);

// Removes edges whose chord is parallel to the normal at either endpoint
// (tangential fraction < tol), where the log map is undefined. Such edges
// appear on exactly symmetric meshes when the graph radius exceeds a local
// diameter. Removal is symmetric; throws DisconnectedNeighborhood if a
// vertex loses every neighbor.
NeighborGraph drop_normal_chords(const NeighborGraph& graph,
                                 const MatX& positions, const MatX& normals,
                                 double tol = 1e-8);

// Multi-source Dijkstra over the edge graph with Euclidean edge weights.
// Zero at inlet vertices.
VecX geodesic_inlet_distance(const MatX& positions, const NeighborGraph& graph,
                             const std::vector<Index>& inlet);

double mean_edge_length(const Mesh& mesh);

}  // namespace gem
