#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gem/mesh.hpp"
#include "gem/mesh_io.hpp"
#include "test_meshes.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

using namespace gem;
using namespace gem::testing;

TEST_CASE("single triangle is a valid mesh") {
  const Mesh m = single_triangle();
  CHECK(m.vertex_count() == 3);
  CHECK(m.face_count() == 1);
}

TEST_CASE("tetrahedron with consistent winding is valid") {
  const Mesh m = tetrahedron();
  CHECK(m.face_count() == 4);
}

TEST_CASE("same-direction shared edge is rejected") {
  MatX v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(2, 3);
  // both faces traverse edge (0,1) in the same direction
  f << 0, 1, 2, 0, 1, 3;
  CHECK_THROWS_AS(build_mesh(v, f), InconsistentOrientation);
}

TEST_CASE("degenerate face is rejected") {
  MatX v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(1, 3);
  f << 0, 1, 2;
  CHECK_THROWS_AS(build_mesh(v, f), DegenerateFace);
}

TEST_CASE("edge shared by three faces is rejected") {
  MatX v(5, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(3, 3);
  f << 0, 1, 2, 1, 0, 3, 0, 1, 4;
  CHECK_THROWS_AS(build_mesh(v, f), Error);
}

TEST_CASE("icosahedron vertex normals are radial") {
  const Mesh m = icosphere(0);
  const MatX n = vertex_normals(m);
  for (Index v = 0; v < m.vertex_count(); ++v) {
    const Vec3 radial = m.position(v).normalized();
    CHECK((n.row(v).transpose() - radial).norm() < 1e-12);
  }
}

TEST_CASE("flat square normals point +z") {
  const Mesh m = flat_square();
  const MatX n = vertex_normals(m);
  for (Index v = 0; v < m.vertex_count(); ++v) {
    CHECK(n(v, 2) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("icosphere normals within 2 degrees of radial") {
  const Mesh m = icosphere(3);
  const MatX n = vertex_normals(m);
  double max_angle = 0.0;
  for (Index v = 0; v < m.vertex_count(); ++v) {
    const double cosang =
        std::min(1.0, n.row(v).dot(m.position(v).normalized().transpose()));
    max_angle = std::max(max_angle, std::acos(cosang));
  }
  CHECK(max_angle < 2.0 * kPi / 180.0);
}

TEST_CASE("radius graph on collinear points") {
  MatX p(3, 3);
  p << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  const NeighborGraph g = radius_graph(p, 1.5);
  CHECK(g.neighbors(0).size() == 1);
  CHECK(g.neighbors(1).size() == 2);
  CHECK(g.neighbors(2).size() == 1);
  CHECK_THROWS_AS(radius_graph(p, 0.5), DisconnectedNeighborhood);
}

TEST_CASE("radius graph matches brute force and is symmetric") {
  const Mesh m = icosphere(2);
  const double r = 1.2 * mean_edge_length(m);
  const NeighborGraph g = radius_graph(m.vertices, r);
  for (Index p = 0; p < m.vertex_count(); ++p) {
    std::vector<Index> brute;
    for (Index q = 0; q < m.vertex_count(); ++q)
      if (q != p && (m.vertices.row(q) - m.vertices.row(p)).norm() <= r)
        brute.push_back(q);
    CHECK(g.neighbors(p) == brute);
    CHECK(g.neighbors(p).size() >= 3);
    for (Index q : g.neighbors(p)) {
      const auto& back = g.neighbors(q);
      CHECK(std::find(back.begin(), back.end(), p) != back.end());
    }
  }
}

TEST_CASE("geodesic distance: zero at inlet, bounded on a straight tube") {
  const Mesh m = tube(40.0, 1.5, 41, 16);
  const NeighborGraph g = radius_graph(m.vertices, 1.3 * mean_edge_length(m));
  const VecX d = geodesic_inlet_distance(m.vertices, g, m.inlet);
  for (Index v : m.inlet) CHECK(d[v] == 0.0);
  for (Index v : m.outlet) {
    CHECK(d[v] >= 40.0);
    CHECK(d[v] <= 44.0);
  }
}

TEST_CASE("geodesic distance: missing inlet and unreachable component") {
  const Mesh m = tube(10.0, 1.0, 6, 8);
  const NeighborGraph g = radius_graph(m.vertices, 1.3 * mean_edge_length(m));
  CHECK_THROWS_AS(geodesic_inlet_distance(m.vertices, g, {}), NoInlet);

  // two far-apart tubes; graph connects within each but not across
  MatX p(m.vertex_count() * 2, 3);
  p.topRows(m.vertex_count()) = m.vertices;
  p.bottomRows(m.vertex_count()) = m.vertices;
  p.bottomRows(m.vertex_count()).col(0).array() += 100.0;
  const NeighborGraph g2 = radius_graph(p, 1.3 * mean_edge_length(m));
  CHECK_THROWS_AS(geodesic_inlet_distance(p, g2, {0}), UnreachableVertex);
}

TEST_CASE("geodesic distance satisfies the edge triangle inequality") {
  const Mesh m = tube(20.0, 1.5, 21, 12);
  const NeighborGraph g = radius_graph(m.vertices, 1.3 * mean_edge_length(m));
  const VecX d = geodesic_inlet_distance(m.vertices, g, m.inlet);
  for (Index p = 0; p < m.vertex_count(); ++p)
    for (Index q : g.neighbors(p))
      CHECK(std::abs(d[p] - d[q]) <=
            (m.vertices.row(p) - m.vertices.row(q)).norm() + 1e-12);
}

TEST_CASE("rigid motion: adjacency unchanged, normals rotate, distance fixed") {
  const Mesh m = icosphere(2);
  const double r = 1.2 * mean_edge_length(m);
  const Mat3 rot = rotation_from_seed(11);
  const Vec3 shift(3.0, -2.0, 0.5);

  Mesh moved = m;
  moved.vertices = (m.vertices * rot.transpose()).rowwise() + shift.transpose();

  const NeighborGraph g0 = radius_graph(m.vertices, r);
  const NeighborGraph g1 = radius_graph(moved.vertices, r);
  for (Index v = 0; v < m.vertex_count(); ++v)
    CHECK(g0.neighbors(v) == g1.neighbors(v));

  const MatX n0 = vertex_normals(m);
  const MatX n1 = vertex_normals(moved);
  CHECK((n1 - n0 * rot.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  const VecX d0 = geodesic_inlet_distance(m.vertices, g0, {0});
  const VecX d1 = geodesic_inlet_distance(moved.vertices, g1, {0});
  CHECK((d0 - d1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("OBJ and marker sidecar round trip") {
  const Mesh m = tube(10.0, 1.0, 6, 8);
  const auto dir = std::filesystem::temp_directory_path();
  const auto obj = dir / "gem_test_mesh.obj";
  const auto side = dir / "gem_test_mesh.json";
  write_obj(m, obj);
  write_markers(m, side);
  Mesh back = read_obj(obj);
  read_markers(back, side);
  CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.faces == m.faces);
  CHECK(back.inlet == m.inlet);
  CHECK(back.outlet == m.outlet);
  std::filesystem::remove(obj);
  std::filesystem::remove(side);
}

TEST_CASE("degenerate normal-parallel chords are dropped symmetrically") {
  // 8 points on an exact circle: diametric chords are antiparallel to the
  // radial normals, the rest are genuinely tangential
  const int n = 8;
  MatX pos(n, 3), normals(n, 3);
  for (int k = 0; k < n; ++k) {
    const double a = kTwoPi * k / n;
    pos.row(k) << std::cos(a), std::sin(a), 0.0;
    normals.row(k) << std::cos(a), std::sin(a), 0.0;
  }
  const NeighborGraph full = radius_graph(pos, 2.5);  // complete graph
  const NeighborGraph cut = drop_normal_chords(full, pos, normals);
  for (Index p = 0; p < n; ++p) {
    const auto& adj = cut.neighbors(p);
    CHECK(adj.size() == full.neighbors(p).size() - 1);
    CHECK(std::find(adj.begin(), adj.end(), (p + n / 2) % n) == adj.end());
    for (Index q : adj) {
      const auto& back = cut.neighbors(q);
      CHECK(std::find(back.begin(), back.end(), p) != back.end());
    }
  }
  // a graph of only degenerate chords cannot survive
  NeighborGraph pair;
  pair.radius = 3.0;
  pair.adjacency = {{1}, {0}};
  MatX two(2, 3), nrm(2, 3);
  two << 1, 0, 0, -1, 0, 0;
  nrm << 1, 0, 0, -1, 0, 0;
  CHECK_THROWS_AS(drop_normal_chords(pair, two, nrm),
                  DisconnectedNeighborhood);
}
