#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gem/baselines.hpp"
#include "gem/ops.hpp"
#include "test_meshes.hpp"

using namespace gem;
using namespace gem::testing;

namespace {

struct Setup {
  Mesh mesh;
  NeighborGraph graph;
  GaugeAtlas atlas;
};

Setup make_setup(const Mesh& mesh, double radius_scale = 1.3,
                 std::optional<std::uint64_t> seed = std::nullopt) {
  Setup s{mesh,
          radius_graph(mesh.vertices, radius_scale * mean_edge_length(mesh)),
          {}};
  s.atlas = build_gauges(s.mesh.vertices, vertex_normals(mesh), s.graph, seed);
  return s;
}

MatX random_mat(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  MatX m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

}  // namespace

TEST_CASE("isotropic conv maps constants through W") {
  const auto s = make_setup(icosphere(1));
  const Index n = s.mesh.vertex_count();
  MatX f(n, 3);
  f.col(0).setConstant(1.0);
  f.col(1).setConstant(-2.0);
  f.col(2).setConstant(0.5);
  const MatX W = random_mat(3, 4, 1);
  const MatX out = isotropic_conv(f, s.graph, W);
  const Eigen::RowVectorXd expected = f.row(0) * W;
  for (Index p = 0; p < n; ++p)
    CHECK((out.row(p) - expected).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("isotropic conv is neighbor-permutation invariant") {
  MatX pos = random_mat(6, 3, 2);
  NeighborGraph g1;
  g1.radius = 10;
  g1.adjacency = {{1, 2, 3, 4, 5}, {0}, {0}, {0}, {0}, {0}};
  NeighborGraph g2 = g1;
  g2.adjacency[0] = {4, 1, 5, 3, 2};
  const MatX f = random_mat(6, 3, 3);
  const MatX W = random_mat(3, 2, 4);
  CHECK((isotropic_conv(f, g1, W) - isotropic_conv(f, g2, W))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
  // star center: hand mean
  const Eigen::RowVectorXd mean =
      (f.row(1) + f.row(2) + f.row(3) + f.row(4) + f.row(5)) / 5.0;
  CHECK((isotropic_conv(f, g1, W).row(0) - mean * W).cwiseAbs().maxCoeff() <
        1e-13);
}

TEST_CASE("isotropic conv equals gem_conv with only (0,0) kernels") {
  const auto s = make_setup(icosphere(2), 1.3, 7);
  const KernelBasisSet bases(0);
  const Index n = s.mesh.vertex_count();
  const int ci = 3, co = 4;
  const IrrepSignature in_sig({{0, ci}});
  const IrrepSignature out_sig({{0, co}});
  GemConvWeights gw = make_conv_weights(in_sig, out_sig, bases);
  const MatX M = random_mat(co, ci, 11);
  gw.neighbor[0].elems[0] = M;  // self weights stay zero

  IrrepField f{in_sig, random_mat(n, ci, 12)};
  const MatX a = gem_conv(f, s.graph, s.atlas, bases, gw).values;
  // the constant (0,0) basis element has value kappa
  const double kappa = bases.pair(0, 0).eval_neighbor(0, 0.0)(0, 0);
  const MatX b = isotropic_conv(f.values, s.graph, kappa * M.transpose());
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("attention with w = 0 is uniform and weights sum to 1") {
  const auto s = make_setup(icosphere(1), 1.3, 21);
  const Index n = s.mesh.vertex_count();
  const MatX f = random_mat(n, 3, 22);
  const MatX W = random_mat(3, 2, 23);
  const VecX w0 = VecX::Zero(3);
  const MatX a = attention_conv(f, s.graph, W, w0);
  for (Index p = 0; p < n; ++p) {
    const VecX weights = attention_weights(f, s.graph, w0, p);
    CHECK(weights.sum() == doctest::Approx(1.0));
    CHECK((weights.array() - 1.0 / weights.size()).abs().maxCoeff() < 1e-14);
    // uniform attention = isotropic conv scaled by 1/|N|
  }
  const MatX iso = isotropic_conv(f, s.graph, W);
  for (Index p = 0; p < n; ++p) {
    const double inv = 1.0 / s.graph.neighbors(p).size();
    CHECK((a.row(p) - inv * iso.row(p)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("a dominating score takes nearly all attention") {
  MatX pos = random_mat(4, 3, 31);
  NeighborGraph g;
  g.radius = 10;
  g.adjacency = {{1, 2, 3}, {0}, {0}, {0}};
  MatX f = MatX::Zero(4, 1);
  f(1, 0) = 20.0;  // score (f(q)-f(p)).w = 20 for q=1, 0 for the others
  const VecX w = VecX::Ones(1);
  const VecX weights = attention_weights(f, g, w, 0);
  CHECK(weights[0] > 0.999);
  CHECK(weights[1] < 1e-3);
  // anisotropy: two neighbors with different features get different weights
  CHECK(std::abs(weights[0] - weights[1]) > 0.9);
}

TEST_CASE("attention gradients match finite differences") {
  const auto s = make_setup(icosphere(0), 1.3, 41);
  const Index n = s.mesh.vertex_count();
  const MatX f = random_mat(n, 3, 42);
  const MatX W = random_mat(3, 2, 43);
  const VecX w = random_mat(3, 1, 44).col(0);
  const MatX G = random_mat(n, 2, 45);

  const AttentionGrad grad = attention_conv_backward(f, s.graph, W, w, G);
  const double h = 1e-6;
  auto loss = [&](const MatX& ff, const MatX& WW, const VecX& ww) {
    return attention_conv(ff, s.graph, WW, ww).cwiseProduct(G).sum();
  };
  MatX fp = f;
  for (Index v = 0; v < n; ++v)
    for (Index c = 0; c < 3; ++c) {
      fp(v, c) = f(v, c) + h;
      const double up = loss(fp, W, w);
      fp(v, c) = f(v, c) - h;
      const double dn = loss(fp, W, w);
      fp(v, c) = f(v, c);
      CHECK(grad.dfield(v, c) ==
            doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
    }
  MatX Wp = W;
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 2; ++c) {
      Wp(r, c) = W(r, c) + h;
      const double up = loss(f, Wp, w);
      Wp(r, c) = W(r, c) - h;
      const double dn = loss(f, Wp, w);
      Wp(r, c) = W(r, c);
      CHECK(grad.dW(r, c) ==
            doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
    }
  VecX wp = w;
  for (Index c = 0; c < 3; ++c) {
    wp[c] = w[c] + h;
    const double up = loss(f, W, wp);
    wp[c] = w[c] - h;
    const double dn = loss(f, W, wp);
    wp[c] = w[c];
    CHECK(grad.dw[c] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("pointnet message basics") {
  MatX pos(3, 3);
  pos << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  const MatX f = random_mat(3, 2, 51);
  Mlp theta{random_mat(5, 6, 52), random_mat(6, 1, 53).col(0),
            random_mat(6, 2, 54), random_mat(2, 1, 55).col(0)};

  NeighborGraph single;
  single.radius = 2;
  single.adjacency = {{1}, {0}, {0, 1}};
  const MatX out = pointnet_message(f, single, pos, theta);
  VecX z(5);
  z.head(2) = f.row(1).transpose();
  z.tail(3) = (pos.row(1) - pos.row(0)).transpose();
  const VecX expect =
      theta.W2.transpose() * (theta.W1.transpose() * z + theta.b1).cwiseMax(0.0) +
      theta.b2;
  CHECK((out.row(0) - expect.transpose()).cwiseAbs().maxCoeff() < 1e-13);

  // duplicated neighbor changes nothing (max is idempotent)
  NeighborGraph dup = single;
  dup.adjacency[0] = {1, 1};
  CHECK((pointnet_message(f, dup, pos, theta).row(0) - out.row(0))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // permutation invariance over neighbors
  NeighborGraph perm = single;
  perm.adjacency[2] = {1, 0};
  CHECK((pointnet_message(f, perm, pos, theta).row(2) - out.row(2))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("pointnet message is translation invariant but not rotation invariant") {
  const auto s = make_setup(icosphere(1), 1.3, 61);
  const Index n = s.mesh.vertex_count();
  const MatX f = random_mat(n, 2, 62);
  // affine theta in its active range: large positive b1 keeps ReLU linear
  Mlp theta{random_mat(5, 5, 63), VecX::Constant(5, 100.0),
            random_mat(5, 3, 64), VecX::Zero(3)};

  const MatX base = pointnet_message(f, s.graph, s.mesh.vertices, theta);
  const Vec3 shift(4, -2, 1);
  const MatX shifted =
      pointnet_message(f, s.graph,
                       MatX(s.mesh.vertices.rowwise() + shift.transpose()),
                       theta);
  CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-9);

  const Mat3 rot = rotation_from_seed(6);
  const MatX rotated =
      pointnet_message(f, s.graph, MatX(s.mesh.vertices * rot.transpose()),
                       theta);
  CHECK((base - rotated).cwiseAbs().maxCoeff() > 1e-2);
}

TEST_CASE("pointnet gradients match finite differences") {
  const auto s = make_setup(icosphere(0), 1.3, 71);
  const Index n = s.mesh.vertex_count();
  const MatX f = random_mat(n, 2, 72);
  Mlp theta{random_mat(5, 4, 73), random_mat(4, 1, 74).col(0),
            random_mat(4, 3, 75), random_mat(3, 1, 76).col(0)};
  const MatX G = random_mat(n, 3, 77);

  const PointnetGrad grad =
      pointnet_message_backward(f, s.graph, s.mesh.vertices, theta, G);
  const double h = 1e-6;
  auto loss = [&](const MatX& ff, const Mlp& th) {
    return pointnet_message(ff, s.graph, s.mesh.vertices, th)
        .cwiseProduct(G)
        .sum();
  };
  MatX fp = f;
  for (Index v = 0; v < n; ++v)
    for (Index c = 0; c < 2; ++c) {
      fp(v, c) = f(v, c) + h;
      const double up = loss(fp, theta);
      fp(v, c) = f(v, c) - h;
      const double dn = loss(fp, theta);
      fp(v, c) = f(v, c);
      CHECK(grad.dfield(v, c) ==
            doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
    }
  Mlp tp = theta;
  std::vector<std::pair<MatX*, const MatX*>> mats = {
      {&tp.W1, &grad.dtheta.W1}, {&tp.W2, &grad.dtheta.W2}};
  for (auto& [m, gm] : mats)
    for (Index r = 0; r < m->rows(); ++r)
      for (Index c = 0; c < m->cols(); ++c) {
        const double orig = (*m)(r, c);
        (*m)(r, c) = orig + h;
        const double up = loss(f, tp);
        (*m)(r, c) = orig - h;
        const double dn = loss(f, tp);
        (*m)(r, c) = orig;
        CHECK((*gm)(r, c) ==
              doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
      }
  for (auto [b, gb] : {std::pair{&tp.b1, &grad.dtheta.b1},
                       std::pair{&tp.b2, &grad.dtheta.b2}})
    for (Index i = 0; i < b->size(); ++i) {
      const double orig = (*b)[i];
      (*b)[i] = orig + h;
      const double up = loss(f, tp);
      (*b)[i] = orig - h;
      const double dn = loss(f, tp);
      (*b)[i] = orig;
      CHECK((*gb)[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
    }
}
