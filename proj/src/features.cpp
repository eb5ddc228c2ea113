#include "gem/features.hpp"

namespace gem {

FeaturePack local_shape_features(const MatX& positions,
                                 const NeighborGraph& graph,
                                 const MatX& normals) {
  const Index n = positions.rows();
  if (graph.vertex_count() != n || normals.rows() != n)
    throw ShapeMismatch("local_shape_features: size mismatch");
  FeaturePack pack;
  pack.m1.resize(n);
  pack.m2.resize(n);
  pack.m3.resize(n);
  pack.geodesic = VecX::Zero(n);
  for (Index p = 0; p < n; ++p) {
    const auto& nb = graph.neighbors(p);
    if (nb.empty())
      throw DisconnectedNeighborhood("local_shape_features: vertex " +
                                     std::to_string(p) + " has no neighbors");
    Mat3 m1 = Mat3::Zero(), m2 = Mat3::Zero(), m3 = Mat3::Zero();
    for (Index q : nb) {
      const Vec3 v = (positions.row(q) - positions.row(p)).transpose();
      const Vec3 nq = normals.row(q).transpose();
      m1 += v * v.transpose();
      m2 += nq * nq.transpose();
      m3 += v * nq.transpose();
    }
    const double inv = 1.0 / static_cast<double>(nb.size());
    pack.m1[p] = m1 * inv;
    pack.m2[p] = m2 * inv;
    pack.m3[p] = m3 * inv;
  }
  return pack;
}

IrrepField to_irrep_field(const FeaturePack& pack, const GaugeAtlas& atlas) {
  const Index n = pack.vertex_count();
  if (atlas.vertex_count() != n || pack.geodesic.size() != n)
    throw ShapeMismatch("to_irrep_field: size mismatch");
  const bool bc = pack.boundary_condition.has_value();
  const IrrepSignature sig({{0, bc ? 9 : 8}, {1, 4}, {2, 3}});
  IrrepField out{sig, MatX::Zero(n, sig.dim())};
  const int off1 = sig.offset(1);
  const int off2 = sig.offset(2);
  const double bc_scaled =
      bc ? (*pack.boundary_condition - kBcLow) / (kBcHigh - kBcLow) : 0.0;

  for (Index p = 0; p < n; ++p) {
    Mat3 w;
    w.col(0) = atlas.frame_e1(p);
    w.col(1) = atlas.frame_e2(p);
    w.col(2) = atlas.frame_n(p);
    const Mat3 mats[3] = {w.transpose() * pack.m1[p] * w,
                          w.transpose() * pack.m2[p] * w,
                          w.transpose() * pack.m3[p] * w};
    int c0 = 0;
    for (int k = 0; k < 3; ++k) {
      const Mat3& a = mats[k];
      out.values(p, c0++) = a(2, 2);
      out.values(p, c0++) = a(0, 0) + a(1, 1);
      if (k == 2) out.values(p, c0++) = a(0, 1) - a(1, 0);
      // traceless-symmetric tangent block, one m=2 pair per matrix
      out.values(p, off2 + 2 * k) = 0.5 * (a(0, 0) - a(1, 1));
      out.values(p, off2 + 2 * k + 1) = 0.5 * (a(0, 1) + a(1, 0));
    }
    out.values(p, c0++) = pack.geodesic[p];
    if (bc) out.values(p, c0++) = bc_scaled;
    // tangent-normal pairs: m1, m2 symmetric (column = row), m3 both
    out.values(p, off1 + 0) = mats[0](0, 2);
    out.values(p, off1 + 1) = mats[0](1, 2);
    out.values(p, off1 + 2) = mats[1](0, 2);
    out.values(p, off1 + 3) = mats[1](1, 2);
    out.values(p, off1 + 4) = mats[2](0, 2);
    out.values(p, off1 + 5) = mats[2](1, 2);
    out.values(p, off1 + 6) = mats[2](2, 0);
    out.values(p, off1 + 7) = mats[2](2, 1);
  }
  return out;
}

namespace {

void check_head_signature(const IrrepSignature& sig, int T) {
  const IrrepSignature expected({{0, T}, {1, T}});
  if (!(sig == expected))
    throw SignatureMismatch(
        "output_head: signature must be one m=0 and one m=1 channel per "
        "time step");
}

}  // namespace

MatX output_head(const IrrepField& field, const GaugeAtlas& atlas, int T) {
  check_head_signature(field.signature, T);
  const Index n = field.vertex_count();
  if (atlas.vertex_count() != n)
    throw ShapeMismatch("output_head: atlas size mismatch");
  const int off1 = field.signature.offset(1);
  MatX out(n, 3 * T);
  for (Index p = 0; p < n; ++p) {
    const Vec3 e1 = atlas.frame_e1(p);
    const Vec3 e2 = atlas.frame_e2(p);
    const Vec3 nn = atlas.frame_n(p);
    for (int t = 0; t < T; ++t) {
      const Vec3 a = field.values(p, t) * nn +
                     field.values(p, off1 + 2 * t) * e1 +
                     field.values(p, off1 + 2 * t + 1) * e2;
      out.row(p).segment(3 * t, 3) = a.transpose();
    }
  }
  return out;
}

MatX output_head_backward(const MatX& dambient, const GaugeAtlas& atlas,
                          int T) {
  const Index n = dambient.rows();
  if (dambient.cols() != 3 * T || atlas.vertex_count() != n)
    throw ShapeMismatch("output_head_backward: shape mismatch");
  const IrrepSignature sig({{0, T}, {1, T}});
  const int off1 = sig.offset(1);
  MatX din(n, sig.dim());
  for (Index p = 0; p < n; ++p) {
    const Vec3 e1 = atlas.frame_e1(p);
    const Vec3 e2 = atlas.frame_e2(p);
    const Vec3 nn = atlas.frame_n(p);
    for (int t = 0; t < T; ++t) {
      const Vec3 g = dambient.row(p).segment(3 * t, 3).transpose();
      din(p, t) = g.dot(nn);
      din(p, off1 + 2 * t) = g.dot(e1);
      din(p, off1 + 2 * t + 1) = g.dot(e2);
    }
  }
  return din;
}

}  // namespace gem
