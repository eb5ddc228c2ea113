#pragma once

#include <optional>

#include "gem/gauge.hpp"
#include "gem/irrep.hpp"
#include "gem/mesh.hpp"

namespace gem {

// Per-vertex neighborhood moment matrices plus scalar channels. m1 and m2
// are symmetric by construction, m3 is a full matrix.
struct FeaturePack {
  std::vector<Mat3> m1;  // mean v v^T over the neighborhood
  std::vector<Mat3> m2;  // mean n_q n_q^T
  std::vector<Mat3> m3;  // mean v n_q^T
  VecX geodesic;         // inlet distance, mm (caller supplied)
  std::optional<double> boundary_condition;  // ml/s

  Index vertex_count() const { return static_cast<Index>(m1.size()); }
};

// Training range of the inflow boundary condition, ml/s; the scalar channel
// is (bc - lo) / (hi - lo).
inline constexpr double kBcLow = 1.87;
inline constexpr double kBcHigh = 4.36;

// Neighborhood moments with v_{p->q} = x_q - x_p. The geodesic channel is
// left zero; callers fill it from geodesic_inlet_distance.
FeaturePack local_shape_features(const MatX& positions,
                                 const NeighborGraph& graph,
                                 const MatX& normals);

// Conjugates every matrix into the local basis W = [e1 e2 n] and splits it
// into SO(2) irrep channels. Channel order is fixed:
//   m=0: m1_nn, m1_tr, m2_nn, m2_tr, m3_nn, m3_tr, m3_antisym, geodesic,
//        [boundary condition];
//   m=1: m1 tangent-normal, m2 tangent-normal, m3 column, m3 row;
//   m=2: traceless-symmetric tangent blocks of m1, m2, m3.
IrrepField to_irrep_field(const FeaturePack& pack, const GaugeAtlas& atlas);

// Ambient vectors per time step: f0 n + f1x e1 + f1y e2. The field signature
// must be exactly {m=0 x T, m=1 x T}; returns V x 3T.
MatX output_head(const IrrepField& field, const GaugeAtlas& atlas, int T);

// Gradient of output_head with respect to the field values.
MatX output_head_backward(const MatX& dambient, const GaugeAtlas& atlas,
                          int T);

}  // namespace gem
