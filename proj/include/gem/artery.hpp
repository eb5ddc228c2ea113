#pragma once

#include <cstdint>

#include "gem/mesh.hpp"

namespace gem {

enum class ArteryKind { single, bifurcating };

// Stenosis: position as a fraction of the unextended centerline arclength,
// severity as the fraction of diameter lost at the throat (<= 0.5), and the
// top/bottom split of the narrowing (asymmetry in [0, 1], 0.5 = symmetric).
struct Stenosis {
  double position = 0.5;
  double severity = 0.0;
  double asymmetry = 0.5;
};

// Everything needed to regenerate a mesh and its labels deterministically.
// Lengths in mm, angles in degrees, flow in ml/s.
struct ArterySpec {
  ArteryKind kind = ArteryKind::single;
  std::uint64_t seed = 0;
  MatX control_points;  // main path (PMV + DMV for bifurcating)
  MatX branch_points;   // side-branch path (bifurcating only)
  double base_radius = 1.6;  // single
  std::vector<Stenosis> stenoses;
  double beta = 0.0;        // angle between DMV and SB centerlines
  double beta_prime = 0.0;  // angle between bifurcation bisector and SB
  double gamma = 0.0;       // out-of-plane entry angle of the PMV
  double r_pmv = 0.0, r_dmv = 0.0, r_sb = 0.0;
  double eps_law = 0.0;  // bifurcation-law residual, diameters in cm
  double flow = 3.0;
  int waveform = 0;
};

struct SynthConfig {
  int segments = 36;      // circumferential vertices per contour
  double spacing = 0.30;  // ring spacing as a fraction of the local radius
};

// One branch of the sampled centerline: dense polyline, per-sample lumen
// radius (mm), cumulative arclength.
struct Centerline {
  MatX points;
  VecX radius;
  VecX arclen;
};

struct ArteryGeometry {
  std::vector<Centerline> branches;  // [0] = main path, [1] = side branch
  double bifurcation_s = 0.0;        // arclength of the branch point
};

// Dense centerlines recomputed from the spec; pure in the spec.
ArteryGeometry artery_centerlines(const ArterySpec& spec, int samples = 600);

// Lofted wall mesh; pure in (spec, config). Throws SelfIntersection when the
// sampled geometry cannot be lofted without overlap.
Mesh artery_mesh(const ArterySpec& spec, const SynthConfig& config = {});

struct ArterySample {
  ArterySpec spec;
  Mesh mesh;
};

// Idealised single-inlet/single-outlet artery: planar-symmetric centerline,
// circular contours, up to two asymmetric stenoses, straight flow extensions
// of five diameters at both ends.
ArterySample synth_single(std::uint64_t seed, const SynthConfig& config = {});

// Left-main-like bifurcation per the coronary atlas statistics; rejects radii
// until the d^2.4 bifurcation law holds with |eps| <= 0.165 (diameters in cm).
ArterySample synth_bifurcating(std::uint64_t seed,
                               const SynthConfig& config = {});

// Fills control_points/branch_points from the spec's atlas angles: seven
// stations 4 mm apart, branch at the fourth, segment angles interpolated
// linearly from zero and clamped away from a right angle.
void bifurcation_control_points(ArterySpec& spec);

// (d_pmv)^a - (d_dmv)^a - (d_sb)^a; callers pass diameters in cm.
double bifurcation_residual(double d_pmv, double d_dmv, double d_sb,
                            double a = 2.4);

// Raised-cosine pulse with unit mean, T samples over one cardiac cycle.
VecX flow_waveform(int T);

// Poiseuille proxy labels on the wall vertices. WSS: V x 3T ambient vectors
// in Pa, tangential, magnitude 4 mu Q(t) / (pi r^3) with mu = 0.04 g/(cm s).
// Pressure: V x 3T vectors p(t) n(v) with p in kPa, outlet at 13.332 kPa.
MatX wss_labels(const ArterySpec& spec, const Mesh& mesh, double flow, int T);
MatX pressure_labels(const ArterySpec& spec, const Mesh& mesh, double flow,
                     int T);

}  // namespace gem
