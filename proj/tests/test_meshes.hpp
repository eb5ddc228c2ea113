#pragma once

// Shared synthetic meshes for the test suites.

#include <array>
#include <cmath>
#include <map>
#include <random>

#include "gem/mesh.hpp"

namespace gem::testing {

inline Mesh single_triangle() {
  MatX v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(1, 3);
  f << 0, 1, 2;
  return build_mesh(v, f);
}

inline Mesh tetrahedron() {
  MatX v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(4, 3);
  // outward-facing, consistent winding
  f << 0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3;
  return build_mesh(v, f);
}

// Unit square in the z=0 plane split into 2 CCW triangles (+z normals).
inline Mesh flat_square() {
  MatX v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(2, 3);
  f << 0, 1, 2, 0, 2, 3;
  return build_mesh(v, f);
}

// nx x ny vertex grid in the z=0 plane with spacing h.
inline Mesh flat_grid(int nx, int ny, double h = 1.0) {
  MatX v(nx * ny, 3);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) v.row(j * nx + i) << i * h, j * h, 0.0;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(2 * (nx - 1) * (ny - 1), 3);
  Index t = 0;
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const Index a = j * nx + i, b = a + 1, c = a + nx + 1, d = a + nx;
      f.row(t++) << a, b, c;
      f.row(t++) << a, c, d;
    }
  return build_mesh(v, f);
}

// Icosphere by repeated midpoint subdivision of an icosahedron, radius 1.
inline Mesh icosphere(int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : verts) p.normalize();
  std::vector<std::array<Index, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<Index, Index>, Index> midpoint;
    auto mid = [&](Index a, Index b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find({key.first, key.second});
      if (it != midpoint.end()) return it->second;
      const Index m = static_cast<Index>(verts.size());
      verts.push_back(((verts[a] + verts[b]) / 2.0).normalized());
      midpoint[{key.first, key.second}] = m;
      return m;
    };
    std::vector<std::array<Index, 3>> next;
    for (const auto& [a, b, c] : faces) {
      const Index ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  MatX v(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i)
    v.row(static_cast<Index>(i)) = verts[i].transpose();
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(static_cast<Index>(faces.size()),
                                            3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int k = 0; k < 3; ++k) f(static_cast<Index>(i), k) = faces[i][k];
  return build_mesh(v, f);
}

// Open tube along +x: length L, radius r, rings x segments resolution.
// Inlet = first ring, outlet = last ring.
inline Mesh tube(double length, double radius, int rings, int segments) {
  MatX v(rings * segments, 3);
  for (int i = 0; i < rings; ++i) {
    const double x = length * i / (rings - 1);
    for (int j = 0; j < segments; ++j) {
      const double a = kTwoPi * j / segments;
      v.row(i * segments + j) << x, radius * std::cos(a),
          radius * std::sin(a);
    }
  }
  Eigen::Matrix<Index, Eigen::Dynamic, 3> f(2 * (rings - 1) * segments, 3);
  Index t = 0;
  for (int i = 0; i + 1 < rings; ++i)
    for (int j = 0; j < segments; ++j) {
      const Index a = i * segments + j;
      const Index b = i * segments + (j + 1) % segments;
      const Index c = a + segments;
      const Index d = b + segments;
      // outward normals point away from the axis
      f.row(t++) << a, c, b;
      f.row(t++) << b, c, d;
    }
  std::vector<Index> inlet, outlet;
  for (int j = 0; j < segments; ++j) {
    inlet.push_back(j);
    outlet.push_back((rings - 1) * segments + j);
  }
  return build_mesh(v, f, inlet, outlet);
}

inline Mat3 rotation_from_seed(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace gem::testing
