#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gem/artery.hpp"

using namespace gem;

namespace {

// straight tube along +x with circular cross-sections
ArterySpec cylinder_spec(double radius) {
  ArterySpec spec;
  spec.kind = ArteryKind::single;
  spec.base_radius = radius;
  spec.control_points = MatX::Zero(8, 3);
  for (Index i = 0; i < 8; ++i) spec.control_points(i, 0) = 7.5 * i;
  return spec;
}

double axis_distance(const Vec3& p) { return std::hypot(p.y(), p.z()); }

}  // namespace

TEST_CASE("bifurcation residual matches the frozen oracle") {
  CHECK(bifurcation_residual(0.35, 0.32, 0.30) ==
        doctest::Approx(-0.040025339329104286).epsilon(1e-12));
  CHECK(bifurcation_residual(3.5, 3.2, 3.0) ==
        doctest::Approx(-10.053910677734377).epsilon(1e-12));
  // scale covariance: residual(k d) = k^a residual(d)
  CHECK(bifurcation_residual(3.5, 3.2, 3.0) ==
        doctest::Approx(std::pow(10.0, 2.4) *
                        bifurcation_residual(0.35, 0.32, 0.30)));
  CHECK(bifurcation_residual(0.4, 0.3, 0.3, 2.0) ==
        doctest::Approx(0.16 - 0.09 - 0.09));
}

TEST_CASE("flow waveform is positive with unit mean") {
  const VecX w1 = flow_waveform(1);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0] == doctest::Approx(1.0));
  const VecX w = flow_waveform(20);
  REQUIRE(w.size() == 20);
  CHECK(w.minCoeff() > 0.0);
  CHECK(w.mean() == doctest::Approx(1.0).epsilon(1e-12));
  // systolic peak at mid-cycle, diastolic floor at the start
  CHECK(w.maxCoeff() == doctest::Approx(w[10]));
  CHECK(w.minCoeff() == doctest::Approx(w[0]));
  CHECK_THROWS_AS(flow_waveform(0), ConfigInvalid);
}

TEST_CASE("straight spec lofts a cylinder of the requested radius") {
  const double r = 1.5;
  const Mesh mesh = artery_mesh(cylinder_spec(r));
  CHECK(mesh.vertex_count() >= 4000);
  CHECK(mesh.vertex_count() <= 16000);
  for (Index v = 0; v < mesh.vertex_count(); ++v)
    CHECK(axis_distance(mesh.position(v)) == doctest::Approx(r).epsilon(1e-3));
  // flow extensions: the tube spans five diameters beyond both ends
  const double ext = 5.0 * 2.0 * r;
  CHECK(mesh.vertices.col(0).minCoeff() == doctest::Approx(-ext).epsilon(1e-2));
  CHECK(mesh.vertices.col(0).maxCoeff() ==
        doctest::Approx(7.5 * 7 + ext).epsilon(1e-2));
  REQUIRE(!mesh.inlet.empty());
  REQUIRE(!mesh.outlet.empty());
  for (Index v : mesh.inlet)
    CHECK(mesh.position(v).x() ==
          doctest::Approx(mesh.vertices.col(0).minCoeff()));
  for (Index v : mesh.outlet)
    CHECK(mesh.position(v).x() ==
          doctest::Approx(mesh.vertices.col(0).maxCoeff()));
}

TEST_CASE("a severity-0.5 stenosis halves the lumen diameter") {
  ArterySpec spec = cylinder_spec(1.5);
  spec.stenoses.push_back({0.5, 0.5, 0.5});
  const Mesh mesh = artery_mesh(spec);
  double throat = 1e300;
  for (Index v = 0; v < mesh.vertex_count(); ++v)
    throat = std::min(throat, axis_distance(mesh.position(v)));
  CHECK(throat == doctest::Approx(0.5 * 1.5).epsilon(0.02));
  // centerline radius profile reports the same throat
  const ArteryGeometry geo = artery_centerlines(spec);
  REQUIRE(geo.branches.size() == 1);
  CHECK(geo.branches[0].radius.minCoeff() ==
        doctest::Approx(0.5 * 1.5).epsilon(1e-3));
  CHECK(geo.branches[0].radius.maxCoeff() == doctest::Approx(1.5));
}

TEST_CASE("asymmetric stenosis keeps one wall side straight") {
  ArterySpec spec = cylinder_spec(1.5);
  spec.stenoses.push_back({0.5, 0.4, 1.0});  // narrowing entirely from the top
  const Mesh mesh = artery_mesh(spec);
  // centerline runs along x with the in-plane normal z x t = +y: near the
  // throat the bottom wall (y = -r) stays put while the top wall caves in
  const double x_throat = 0.5 * 7.5 * 7;
  double ymin = 1e300, ymax = -1e300;
  int near = 0;
  for (Index v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3 p = mesh.position(v);
    if (std::abs(p.x() - x_throat) > 0.5) continue;
    ++near;
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  REQUIRE(near > 0);
  CHECK(ymin == doctest::Approx(-1.5).epsilon(1e-3));
  // top wall target is r(1 - sev) + offset = 0.3; the sampling window allows
  // a little relaxation of the Gaussian bump
  CHECK(ymax > 0.25);
  CHECK(ymax < 0.45);
}

TEST_CASE("gamma = 0 keeps the bifurcation in the y-z plane") {
  ArterySpec spec;
  spec.kind = ArteryKind::bifurcating;
  spec.beta = 80.0;
  spec.beta_prime = 60.0;
  spec.gamma = 0.0;
  spec.r_pmv = 1.75;
  spec.r_dmv = 1.6;
  spec.r_sb = 1.5;
  bifurcation_control_points(spec);
  REQUIRE(spec.control_points.rows() == 7);
  REQUIRE(spec.branch_points.rows() == 7);
  CHECK(spec.control_points.col(0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(spec.branch_points.col(0).cwiseAbs().maxCoeff() < 1e-12);
  const ArteryGeometry geo = artery_centerlines(spec);
  REQUIRE(geo.branches.size() == 2);
  for (const Centerline& c : geo.branches)
    CHECK(c.points.col(0).cwiseAbs().maxCoeff() < 1e-9);
  // last main segment leans (beta - beta') * 6/4 degrees off the z-axis
  const Vec3 d = (spec.control_points.row(6) - spec.control_points.row(5))
                     .normalized()
                     .transpose();
  CHECK(std::atan2(d.y(), d.z()) * 180.0 / kPi ==
        doctest::Approx(20.0 * 6.0 / 4.0).epsilon(1e-9));
  // side branch heads downward at beta' * 6/4, clamped to 85 degrees
  const Vec3 b = (spec.branch_points.row(6) - spec.branch_points.row(5))
                     .normalized()
                     .transpose();
  CHECK(std::atan2(-b.y(), b.z()) * 180.0 / kPi == doctest::Approx(85.0));
}

TEST_CASE("synthesis is deterministic and meshes regenerate bit-identically") {
  const ArterySample a = synth_bifurcating(7);
  const ArterySample b = synth_bifurcating(7);
  CHECK(a.spec.beta == b.spec.beta);
  CHECK(a.spec.r_pmv == b.spec.r_pmv);
  CHECK(a.spec.flow == b.spec.flow);
  REQUIRE(a.mesh.vertex_count() == b.mesh.vertex_count());
  CHECK((a.mesh.vertices - b.mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.mesh.faces - b.mesh.faces).cwiseAbs().maxCoeff() == 0);
  // the stored spec alone reproduces the mesh
  const Mesh again = artery_mesh(a.spec);
  REQUIRE(again.vertex_count() == a.mesh.vertex_count());
  CHECK((again.vertices - a.mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((again.faces - a.mesh.faces).cwiseAbs().maxCoeff() == 0);

  const ArterySample s1 = synth_single(11);
  const ArterySample s2 = synth_single(11);
  CHECK((s1.mesh.vertices - s2.mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampled single arteries stay within the target size band") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ArterySample a = synth_single(seed);
    CHECK(a.mesh.vertex_count() >= 4000);
    CHECK(a.mesh.vertex_count() <= 16000);
    CHECK(a.spec.base_radius >= 1.25);
    CHECK(a.spec.base_radius <= 2.0);
    CHECK(a.spec.stenoses.size() <= 2);
    for (const Stenosis& st : a.spec.stenoses) CHECK(st.severity <= 0.5);
  }
}

TEST_CASE("sampled bifurcations satisfy the diameter law and ordering") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const ArterySample a = synth_bifurcating(seed);
    CHECK(a.spec.r_pmv > a.spec.r_dmv);
    CHECK(a.spec.r_dmv > a.spec.r_sb);
    const double ratio = a.spec.r_sb / a.spec.r_dmv;
    CHECK(ratio > 0.4);
    CHECK(ratio < 1.0);
    CHECK(std::abs(a.spec.eps_law) <= 0.165);
    CHECK(a.spec.eps_law ==
          doctest::Approx(bifurcation_residual(
              0.2 * a.spec.r_pmv, 0.2 * a.spec.r_dmv, 0.2 * a.spec.r_sb)));
    CHECK(a.mesh.vertex_count() > 0);  // build_mesh already validated it
  }
}

TEST_CASE("wall shear stress matches Poiseuille on a straight tube") {
  // r = 2 mm = 0.2 cm, Q = 2 ml/s: |tau| = 4 mu Q / (pi r^3) = 12.73 dyn/cm^2
  const ArterySpec spec = cylinder_spec(2.0);
  const Mesh mesh = artery_mesh(spec);
  const MatX tau = wss_labels(spec, mesh, 2.0, 1);
  REQUIRE(tau.rows() == mesh.vertex_count());
  REQUIRE(tau.cols() == 3);
  const MatX normals = vertex_normals(mesh);
  for (Index v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3 t = tau.row(v).transpose();
    CHECK(t.norm() == doctest::Approx(1.2732395447351625).epsilon(1e-9));
    CHECK(std::abs(t.dot(normals.row(v).transpose())) / t.norm() < 1e-6);
    CHECK(t.x() / t.norm() > 0.99);  // points downstream
  }
}

TEST_CASE("a 50 percent stenosis raises peak shear eightfold") {
  ArterySpec spec = cylinder_spec(2.0);
  spec.stenoses.push_back({0.5, 0.5, 0.5});
  const Mesh mesh = artery_mesh(spec);
  const MatX tau = wss_labels(spec, mesh, 2.0, 1);
  double peak = 0.0;
  for (Index v = 0; v < mesh.vertex_count(); ++v)
    peak = std::max(peak, tau.row(v).norm());
  CHECK(peak == doctest::Approx(8.0 * 1.2732395447351625).epsilon(0.02));
}

TEST_CASE("pressure labels integrate the Poiseuille drop to the outlet") {
  const ArterySpec spec = cylinder_spec(2.0);
  const Mesh mesh = artery_mesh(spec);
  const MatX p = pressure_labels(spec, mesh, 2.0, 1);
  REQUIRE(p.cols() == 3);
  const MatX normals = vertex_normals(mesh);
  // outlet sits at 13.332 kPa; drop is 8 mu Q L / (pi r^4) over the length
  const double len_cm = 0.1 * (mesh.vertices.col(0).maxCoeff() -
                               mesh.vertices.col(0).minCoeff());
  const double drop_kpa =
      8.0 * 0.04 * 2.0 * len_cm / (kPi * std::pow(0.2, 4)) * 1e-4;
  double pin = 0.0, pout = 0.0;
  for (Index v : mesh.inlet) pin += p.row(v).norm();
  for (Index v : mesh.outlet) pout += p.row(v).norm();
  pin /= static_cast<double>(mesh.inlet.size());
  pout /= static_cast<double>(mesh.outlet.size());
  CHECK(pout == doctest::Approx(13.332).epsilon(1e-6));
  CHECK(pin == doctest::Approx(13.332 + drop_kpa).epsilon(1e-3));
  // vectors point along the outward normal
  for (Index v = 0; v < std::min<Index>(50, mesh.vertex_count()); ++v) {
    const Vec3 pv = p.row(v).transpose();
    CHECK(pv.dot(normals.row(v).transpose()) ==
          doctest::Approx(pv.norm()).epsilon(1e-9));
  }
}

TEST_CASE("pulsatile labels scale with the waveform") {
  const ArterySpec spec = cylinder_spec(2.0);
  SynthConfig coarse;
  coarse.spacing = 0.6;
  const Mesh mesh = artery_mesh(spec, coarse);
  const int T = 4;
  const VecX w = flow_waveform(T);
  const MatX tau = wss_labels(spec, mesh, 2.0, T);
  REQUIRE(tau.cols() == 3 * T);
  for (int k = 1; k < T; ++k) {
    const MatX expect = tau.leftCols(3) * (w[k] / w[0]);
    CHECK((tau.middleCols(3 * k, 3) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("branch flows split by the diameter law exponent") {
  const ArterySample a = synth_bifurcating(3);
  const MatX tau = wss_labels(a.spec, a.mesh, a.spec.flow, 1);
  const ArteryGeometry geo = artery_centerlines(a.spec);
  // shear on the PMV inlet ring reflects the full flow
  const double r_cm = 0.2 * a.spec.r_pmv / 2.0;
  const double expect =
      4.0 * 0.04 * a.spec.flow / (kPi * std::pow(r_cm, 3)) / 10.0;
  double inlet_mean = 0.0;
  for (Index v : a.mesh.inlet) inlet_mean += tau.row(v).norm();
  inlet_mean /= static_cast<double>(a.mesh.inlet.size());
  CHECK(inlet_mean == doctest::Approx(expect).epsilon(0.05));
  CHECK(geo.branches.size() == 2);
  CHECK(geo.bifurcation_s > 0.0);
}
