#include "gem/artery.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>

namespace gem {

namespace {

constexpr double kMu = 0.04;          // dynamic viscosity, g/(cm s)
constexpr double kPOutKpa = 13.332;   // outlet pressure, kPa (100 mmHg)
constexpr double kTaper = 0.875;      // end radius as a fraction of the start
constexpr double kExtensionDiameters = 5.0;
constexpr double kCtrlSpacingSingle = 7.5;  // mm
constexpr double kCtrlSpacingBif = 4.0;     // mm

double deg2rad(double d) { return d * kPi / 180.0; }

// Clamped uniform cubic B-spline through the control polygon.
MatX bspline_dense(const MatX& ctrl, int samples) {
  const int n = static_cast<int>(ctrl.rows());
  if (n < 4) throw ConfigInvalid("bspline: need at least 4 control points");
  // end control points repeated twice so the curve interpolates them
  const int segs = n + 1;
  MatX out(samples, 3);
  for (int k = 0; k < samples; ++k) {
    const double u = static_cast<double>(k) / (samples - 1) * segs;
    int s = std::min(segs - 1, static_cast<int>(u));
    double t = u - s;
    auto cp = [&](int i) -> Vec3 {
      return ctrl.row(std::clamp(i, 0, n - 1)).transpose();
    };
    const Vec3 p0 = cp(s - 2), p1 = cp(s - 1), p2 = cp(s), p3 = cp(s + 1);
    const double t2 = t * t, t3 = t2 * t;
    out.row(k) = ((-t3 + 3 * t2 - 3 * t + 1) * p0 +
                  (3 * t3 - 6 * t2 + 4) * p1 +
                  (-3 * t3 + 3 * t2 + 3 * t + 1) * p2 + t3 * p3)
                     .transpose() /
                 6.0;
  }
  return out;
}

struct DensePath {
  MatX points;    // M x 3
  MatX tangents;  // M x 3, unit
  VecX arclen;    // M, cumulative from 0

  double length() const { return arclen[arclen.size() - 1]; }

  // linear interpolation index/weight for arclength s
  std::pair<Index, double> locate(double s) const {
    const Index m = arclen.size();
    s = std::clamp(s, 0.0, length());
    Index lo =
        std::upper_bound(arclen.data(), arclen.data() + m, s) - arclen.data();
    lo = std::clamp<Index>(lo - 1, 0, m - 2);
    const double seg = arclen[lo + 1] - arclen[lo];
    return {lo, seg > 0 ? (s - arclen[lo]) / seg : 0.0};
  }
  Vec3 point_at(double s) const {
    auto [i, w] = locate(s);
    return ((1 - w) * points.row(i) + w * points.row(i + 1)).transpose();
  }
  Vec3 tangent_at(double s) const {
    auto [i, w] = locate(s);
    Vec3 t = ((1 - w) * tangents.row(i) + w * tangents.row(i + 1)).transpose();
    return t.normalized();
  }
};

DensePath make_path(const MatX& pts) {
  const Index m = pts.rows();
  DensePath p;
  p.points = pts;
  p.arclen = VecX::Zero(m);
  p.tangents = MatX::Zero(m, 3);
  for (Index i = 1; i < m; ++i)
    p.arclen[i] =
        p.arclen[i - 1] + (pts.row(i) - pts.row(i - 1)).norm();
  for (Index i = 0; i < m; ++i) {
    const Index a = std::max<Index>(0, i - 1), b = std::min(m - 1, i + 1);
    p.tangents.row(i) = (pts.row(b) - pts.row(a)).normalized();
  }
  return p;
}

// Straight prolongations along the end tangents (flow extensions).
DensePath extend_path(const DensePath& core, double head, double tail) {
  const Index m = core.points.rows();
  const int kh = head > 0 ? 40 : 0, kt = tail > 0 ? 40 : 0;
  MatX pts(kh + m + kt, 3);
  const Vec3 t0 = core.tangents.row(0).transpose();
  const Vec3 t1 = core.tangents.row(m - 1).transpose();
  for (int i = 0; i < kh; ++i)
    pts.row(i) = (core.points.row(0).transpose() -
                  t0 * head * (1.0 - static_cast<double>(i) / kh))
                     .transpose();
  pts.middleRows(kh, m) = core.points;
  for (int i = 1; i <= kt; ++i)
    pts.row(kh + m - 1 + i) =
        (core.points.row(m - 1).transpose() + t1 * tail * i / kt).transpose();
  return make_path(pts);
}

struct Ring {
  Vec3 center, e1, e2, tangent;
  double r = 0.0;  // nominal lumen radius at this station
  double s = 0.0;  // arclength
};

// Rotation-minimizing frames along the path at radius-proportional spacing.
std::vector<Ring> place_rings(const DensePath& path, double spacing,
                              const std::function<double(double)>& radius,
                              const std::function<Vec3(double)>& offset,
                              double s_begin = 0.0) {
  std::vector<Ring> rings;
  const double total = path.length();
  Vec3 e1_prev = Vec3::Zero();
  double s = s_begin;
  bool done = false;
  while (!done) {
    if (s >= total - 1e-9) {
      s = total;
      done = true;
    }
    Ring ring;
    ring.s = s;
    ring.r = radius(s);
    if (ring.r <= 0.0)
      throw RadiusUnderflow("artery: non-positive lumen radius");
    ring.tangent = path.tangent_at(s);
    if (e1_prev.isZero()) {
      Vec3 up = Vec3::UnitY();
      if (std::abs(up.dot(ring.tangent)) > 0.9) up = Vec3::UnitZ();
      e1_prev = (up - up.dot(ring.tangent) * ring.tangent).normalized();
    }
    ring.e1 =
        (e1_prev - e1_prev.dot(ring.tangent) * ring.tangent).normalized();
    ring.e2 = ring.tangent.cross(ring.e1);
    ring.center = path.point_at(s) + offset(s);
    e1_prev = ring.e1;
    const double step = spacing * ring.r;
    if (!done && s + 0.4 * step > total) {
      s = total;
    } else {
      s += step;
    }
    rings.push_back(ring);
  }
  for (std::size_t i = 0; i + 1 < rings.size(); ++i)
    if (rings[i].tangent.dot(rings[i + 1].center - rings[i].center) <= 0.0)
      throw SelfIntersection("artery: ring ordering collapsed");
  return rings;
}

void emit_tube_faces(Eigen::Matrix<Index, Eigen::Dynamic, 3>& faces,
                     Index& t, Index base, Index n_rings, int S,
                     const std::function<bool(Index, int)>& keep) {
  for (Index i = 0; i + 1 < n_rings; ++i)
    for (int j = 0; j < S; ++j) {
      if (!keep(i, j)) continue;
      const Index a = base + i * S + j;
      const Index b = base + i * S + (j + 1) % S;
      const Index c = a + S;
      const Index d = b + S;
      faces.row(t++) << a, c, b;
      faces.row(t++) << b, c, d;
    }
}

// Circular or elliptical contour vertices; (axes, angle) perturb the circle.
void emit_ring_vertices(MatX& verts, Index base, const Ring& ring, int S,
                        double axis_a, double axis_b, double phi) {
  const double ca = std::cos(phi), sa = std::sin(phi);
  for (int j = 0; j < S; ++j) {
    const double a = kTwoPi * j / S;
    const double u = axis_a * std::cos(a), v = axis_b * std::sin(a);
    const double x = u * ca - v * sa, y = u * sa + v * ca;
    verts.row(base + j) =
        (ring.center + x * ring.e1 + y * ring.e2).transpose();
  }
}

void check_curvature(const DensePath& path,
                     const std::function<double(double)>& radius) {
  const Index m = path.points.rows();
  for (Index i = 0; i + 1 < m; ++i) {
    const double ds = path.arclen[i + 1] - path.arclen[i];
    if (ds <= 0) continue;
    const double kappa =
        (path.tangents.row(i + 1) - path.tangents.row(i)).norm() / ds;
    if (kappa * radius(path.arclen[i]) > 0.9)
      throw SelfIntersection("artery: curvature radius below lumen radius");
  }
}

// ---- single arteries -------------------------------------------------------

double stenosed_radius(const ArterySpec& spec, double s, double s0,
                       double l_main) {
  double r = spec.base_radius;
  const double w = 1.5 * spec.base_radius;
  for (const Stenosis& st : spec.stenoses) {
    const double sc = s0 + st.position * l_main;
    const double g = std::exp(-((s - sc) / w) * ((s - sc) / w));
    r *= 1.0 - st.severity * g;
  }
  return r;
}

Vec3 stenosis_offset(const ArterySpec& spec, double s, double s0,
                     double l_main, const Vec3& up) {
  double off = 0.0;
  const double w = 1.5 * spec.base_radius;
  for (const Stenosis& st : spec.stenoses) {
    const double sc = s0 + st.position * l_main;
    const double g = std::exp(-((s - sc) / w) * ((s - sc) / w));
    off += spec.base_radius * st.severity * (1.0 - 2.0 * st.asymmetry) * g;
  }
  return off * up;
}

DensePath single_path(const ArterySpec& spec, double* ext_len_out) {
  const DensePath core = make_path(bspline_dense(spec.control_points, 500));
  const double ext = kExtensionDiameters * 2.0 * spec.base_radius;
  if (ext_len_out) *ext_len_out = ext;
  return extend_path(core, ext, ext);
}

Mesh single_mesh(const ArterySpec& spec, const SynthConfig& config) {
  double ext = 0.0;
  const DensePath path = single_path(spec, &ext);
  const double l_main = path.length() - 2.0 * ext;
  auto radius = [&](double s) { return stenosed_radius(spec, s, ext, l_main); };
  check_curvature(path, radius);
  auto offset = [&](double s) {
    const Vec3 t = path.tangent_at(s);
    Vec3 up = Vec3::UnitZ().cross(t);
    if (up.norm() < 1e-9) up = Vec3::UnitY();
    return stenosis_offset(spec, s, ext, l_main, up.normalized());
  };
  const auto rings = place_rings(path, config.spacing, radius, offset);
  const int S = config.segments;
  const Index nr = static_cast<Index>(rings.size());
  MatX verts(nr * S, 3);
  for (Index i = 0; i < nr; ++i)
    emit_ring_vertices(verts, i * S, rings[i], S, rings[i].r, rings[i].r, 0.0);
  Eigen::Matrix<Index, Eigen::Dynamic, 3> faces(2 * (nr - 1) * S, 3);
  Index t = 0;
  emit_tube_faces(faces, t, 0, nr, S, [](Index, int) { return true; });
  std::vector<Index> inlet, outlet;
  for (int j = 0; j < S; ++j) {
    inlet.push_back(j);
    outlet.push_back((nr - 1) * S + j);
  }
  return build_mesh(verts, faces, inlet, outlet);
}

// ---- bifurcating arteries --------------------------------------------------

// Segment direction from the in-plane (y-z) angle and the out-of-plane tilt.
Vec3 segment_dir(double theta_deg, double psi_deg, double y_sign) {
  const double th = deg2rad(std::clamp(theta_deg, -85.0, 85.0));
  const double ps = deg2rad(std::clamp(psi_deg, -85.0, 85.0));
  return {std::sin(ps), y_sign * std::cos(ps) * std::sin(th),
          std::cos(ps) * std::cos(th)};
}

}  // namespace

void bifurcation_control_points(ArterySpec& spec) {
  const double dm = spec.beta - spec.beta_prime;  // DMV angle from the z-axis
  MatX main_pts(7, 3), sb_pts(7, 3);
  main_pts.row(0).setZero();
  sb_pts.row(0).setZero();
  for (int i = 1; i <= 6; ++i) {
    const double psi = spec.gamma * i / 3.0;
    main_pts.row(i) =
        main_pts.row(i - 1) +
        kCtrlSpacingBif * segment_dir(dm * i / 4.0, psi, 1.0).transpose();
    const double sb_theta =
        i < 4 ? dm * i / 4.0 : -spec.beta_prime * i / 4.0;
    sb_pts.row(i) =
        sb_pts.row(i - 1) +
        kCtrlSpacingBif *
            segment_dir(std::abs(sb_theta), psi, sb_theta >= 0 ? 1.0 : -1.0)
                .transpose();
  }
  spec.control_points = main_pts;
  spec.branch_points = sb_pts;
}

namespace {

struct BifPaths {
  DensePath main, sb;
  double s_bif_main = 0.0, s_bif_sb = 0.0;
};

BifPaths bifurcation_paths(const ArterySpec& spec) {
  BifPaths p;
  // Flow extensions on every open end. Besides mirroring the single-artery
  // treatment, the straight side-branch prolongation guarantees clearance
  // from the main tube even when a large out-of-plane angle makes the two
  // branches nearly parallel; without it those draws are rejected, which
  // skews the accepted gamma distribution.
  p.main = extend_path(make_path(bspline_dense(spec.control_points, 500)),
                       2.0 * kExtensionDiameters * spec.r_pmv,
                       2.0 * kExtensionDiameters * spec.r_dmv);
  p.sb = extend_path(make_path(bspline_dense(spec.branch_points, 500)), 0.0,
                     2.0 * kExtensionDiameters * spec.r_sb);
  auto nearest_s = [](const DensePath& path, const Vec3& q) {
    double best = 1e300, s = 0.0;
    for (Index i = 0; i < path.points.rows(); ++i) {
      const double d = (path.points.row(i).transpose() - q).norm();
      if (d < best) {
        best = d;
        s = path.arclen[i];
      }
    }
    return s;
  };
  const Vec3 p4 = spec.control_points.row(3).transpose();
  p.s_bif_main = nearest_s(p.main, p4);
  p.s_bif_sb = nearest_s(p.sb, p4);
  return p;
}

double main_radius(const ArterySpec& spec, const BifPaths& paths, double s) {
  const double sb = paths.s_bif_main, L = paths.main.length();
  if (s <= sb)
    return spec.r_pmv + (spec.r_dmv - spec.r_pmv) * (sb > 0 ? s / sb : 1.0);
  const double u = (L > sb) ? (s - sb) / (L - sb) : 1.0;
  return spec.r_dmv * (1.0 + (kTaper - 1.0) * u);
}

double sb_radius(const ArterySpec& spec, const BifPaths& paths, double s) {
  const double sb = paths.s_bif_sb, L = paths.sb.length();
  const double u = std::clamp((L > sb) ? (s - sb) / (L - sb) : 1.0, 0.0, 1.0);
  return spec.r_sb * (1.0 + (kTaper - 1.0) * u);
}

// Zip two closed loops (vertex index sequences) with a manifold triangle
// band, matching by normalized arclength.
std::vector<std::array<Index, 3>> zip_loops(const MatX& verts,
                                            std::vector<Index> a,
                                            std::vector<Index> b) {
  auto fractions = [&](const std::vector<Index>& loop) {
    std::vector<double> f(loop.size() + 1, 0.0);
    for (std::size_t i = 0; i < loop.size(); ++i)
      f[i + 1] = f[i] + (verts.row(loop[(i + 1) % loop.size()]) -
                         verts.row(loop[i]))
                            .norm();
    for (double& x : f) x /= f.back();
    return f;
  };
  // rotate b so that it starts nearest to a's start
  std::size_t best = 0;
  double bd = 1e300;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double d = (verts.row(b[i]) - verts.row(a[0])).norm();
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  std::rotate(b.begin(), b.begin() + best, b.end());
  const auto fa = fractions(a), fb = fractions(b);
  std::vector<std::array<Index, 3>> tris;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    const bool adv_a =
        j >= b.size() || (i < a.size() && fa[i + 1] <= fb[j + 1]);
    if (adv_a) {
      tris.push_back({a[i % a.size()], b[j % b.size()],
                      a[(i + 1) % a.size()]});
      ++i;
    } else {
      tris.push_back({a[i % a.size()], b[j % b.size()],
                      b[(j + 1) % b.size()]});
      ++j;
    }
  }
  return tris;
}

void laplacian_smooth(MatX& verts,
                      const Eigen::Matrix<Index, Eigen::Dynamic, 3>& faces,
                      const std::set<Index>& region, int iterations) {
  std::map<Index, std::set<Index>> adj;
  for (Index f = 0; f < faces.rows(); ++f)
    for (int k = 0; k < 3; ++k) {
      const Index u = faces(f, k), v = faces(f, (k + 1) % 3);
      if (region.count(u)) adj[u].insert(v);
      if (region.count(v)) adj[v].insert(u);
    }
  for (int it = 0; it < iterations; ++it) {
    MatX next = verts;
    for (const auto& [v, nbrs] : adj) {
      Vec3 mean = Vec3::Zero();
      for (Index u : nbrs) mean += verts.row(u).transpose();
      mean /= static_cast<double>(nbrs.size());
      next.row(v) = (0.5 * verts.row(v).transpose() + 0.5 * mean).transpose();
    }
    verts = next;
  }
}

Mesh bifurcating_mesh(const ArterySpec& spec, const SynthConfig& config) {
  const BifPaths paths = bifurcation_paths(spec);
  auto r_main = [&](double s) { return main_radius(spec, paths, s); };
  auto r_sb = [&](double s) { return sb_radius(spec, paths, s); };
  check_curvature(paths.main, r_main);
  auto no_offset = [](double) { return Vec3::Zero(); };
  const auto main_rings =
      place_rings(paths.main, config.spacing, r_main, no_offset);
  const Index n_main = static_cast<Index>(main_rings.size());
  const int S = config.segments;

  // where the side branch leaves the main tube
  auto nearest_ring = [&](const Vec3& q) {
    Index best = 0;
    double bd = 1e300;
    for (Index i = 0; i < n_main; ++i) {
      const double d = (main_rings[i].center - q).norm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  };
  double s_exit = -1.0, s_start = -1.0;
  for (double s = paths.s_bif_sb; s <= paths.sb.length(); s += 0.1) {
    const Vec3 q = paths.sb.point_at(s);
    const Index i = nearest_ring(q);
    const double d = (main_rings[i].center - q).norm();
    if (s_exit < 0 && d > 1.05 * main_rings[i].r) s_exit = s;
    if (d > main_rings[i].r + 0.9 * r_sb(s)) {
      s_start = s;
      break;
    }
  }
  if (s_exit < 0 || s_start < 0 || s_start >= paths.sb.length() - 1.0)
    throw SelfIntersection("artery: side branch does not clear the main tube");

  const auto sb_rings =
      place_rings(paths.sb, config.spacing, r_sb, no_offset, s_start);
  const Index n_sb = static_cast<Index>(sb_rings.size());

  // rectangular hole in (ring, segment) space around the exit point
  const Vec3 exit_pt = paths.sb.point_at(s_exit);
  const Index ic = nearest_ring(exit_pt);
  const Ring& rc = main_rings[ic];
  const Vec3 v = exit_pt - rc.center;
  const double phi = std::atan2(v.dot(rc.e2), v.dot(rc.e1));
  const int jc =
      ((static_cast<int>(std::lround(phi / (kTwoPi / S))) % S) + S) % S;
  const double hole_r = 1.2 * r_sb(s_start);
  const double ring_h =
      ic + 1 < n_main
          ? (main_rings[ic + 1].center - main_rings[ic].center).norm()
          : (main_rings[ic].center - main_rings[ic - 1].center).norm();
  const int di =
      std::max(2, static_cast<int>(std::ceil(hole_r / ring_h)));
  const int dj = std::max(
      2, static_cast<int>(std::ceil(hole_r / (kTwoPi * rc.r / S))));
  const Index i0 = ic - di, i1 = ic + di;
  const int W = 2 * dj;  // removed cells per row; W+1 boundary columns
  const int j0 = ((jc - dj) % S + S) % S;
  if (i0 < 1 || i1 > n_main - 2 || W + 1 > S - 4)
    throw SelfIntersection("artery: junction does not fit on the main tube");

  // vertices: main rings then side-branch rings
  MatX verts((n_main + n_sb) * S, 3);
  std::mt19937_64 rng(spec.seed ^ 0x713f9d2bc1a54e67ull);
  auto noisy = [&](double r) {
    std::uniform_real_distribution<double> u(0.95 * r, 1.05 * r);
    return u(rng);
  };
  std::uniform_real_distribution<double> uang(0.0, kTwoPi);
  for (Index i = 0; i < n_main; ++i) {
    const double r = main_rings[i].r;
    emit_ring_vertices(verts, i * S, main_rings[i], S, noisy(r), noisy(r),
                       uang(rng));
  }
  const Index sb_base = n_main * S;
  for (Index i = 0; i < n_sb; ++i) {
    const double r = sb_rings[i].r;
    emit_ring_vertices(verts, sb_base + i * S, sb_rings[i], S, noisy(r),
                       noisy(r), uang(rng));
  }

  auto in_hole = [&](Index i, int j) {
    if (i < i0 || i >= i1) return false;
    const int dcol = ((j - j0) % S + S) % S;
    return dcol < W;
  };
  const Index n_grid_faces =
      2 * ((n_main - 1) + (n_sb - 1)) * S - 2 * (i1 - i0) * W;
  std::vector<std::array<Index, 3>> tri_list;

  Eigen::Matrix<Index, Eigen::Dynamic, 3> grid(n_grid_faces, 3);
  Index t = 0;
  emit_tube_faces(grid, t, 0, n_main, S,
                  [&](Index i, int j) { return !in_hole(i, j); });
  emit_tube_faces(grid, t, sb_base, n_sb, S,
                  [](Index, int) { return true; });

  // hole perimeter loop, counterclockwise in (ring, segment) grid space
  std::vector<Index> hole;
  auto grid_v = [&](Index i, int dcol) {
    return i * S + (j0 + dcol) % S;
  };
  for (int d = 0; d < W; ++d) hole.push_back(grid_v(i0, d));
  for (Index i = i0; i < i1; ++i) hole.push_back(grid_v(i, W));
  for (int d = W; d > 0; --d) hole.push_back(grid_v(i1, d));
  for (Index i = i1; i > i0; --i) hole.push_back(grid_v(i, 0));
  std::vector<Index> sb_loop;
  for (int j = 0; j < S; ++j) sb_loop.push_back(sb_base + j);

  // the zipper traverses each rim against the direction its edges take in
  // the kept faces; that pins both loop orders and the bridge winding
  std::set<std::pair<Index, Index>> directed;
  for (Index f = 0; f < grid.rows(); ++f)
    for (int k = 0; k < 3; ++k)
      directed.insert({grid(f, k), grid(f, (k + 1) % 3)});
  auto orient = [&](std::vector<Index>& loop, bool along_kept) {
    const bool fwd = directed.count({loop[0], loop[1]}) > 0;
    const bool bwd = directed.count({loop[1], loop[0]}) > 0;
    if (fwd == bwd)
      throw SelfIntersection("artery: junction rim is not a manifold border");
    if (fwd != along_kept) std::reverse(loop.begin(), loop.end());
  };
  orient(hole, true);
  orient(sb_loop, false);

  std::vector<Index> inlet, outlet;
  for (int j = 0; j < S; ++j) {
    inlet.push_back(j);
    outlet.push_back((n_main - 1) * S + j);
    outlet.push_back(sb_base + (n_sb - 1) * S + j);
  }
  const auto bridge = zip_loops(verts, hole, sb_loop);
  Eigen::Matrix<Index, Eigen::Dynamic, 3> faces(
      grid.rows() + static_cast<Index>(bridge.size()), 3);
  faces.topRows(grid.rows()) = grid;
  for (std::size_t k = 0; k < bridge.size(); ++k)
    faces.row(grid.rows() + static_cast<Index>(k))
        << bridge[k][0], bridge[k][1], bridge[k][2];
  try {
    // fillet: smooth the junction band to blend the branches
    std::set<Index> region(hole.begin(), hole.end());
    region.insert(sb_loop.begin(), sb_loop.end());
    for (int grow = 0; grow < 2; ++grow) {
      std::set<Index> next = region;
      for (Index f = 0; f < faces.rows(); ++f) {
        bool hit = false;
        for (int k = 0; k < 3; ++k) hit |= region.count(faces(f, k)) > 0;
        if (hit)
          for (int k = 0; k < 3; ++k) next.insert(faces(f, k));
      }
      region = next;
    }
    MatX smoothed = verts;
    laplacian_smooth(smoothed, faces, region, 8);
    // drop the now-faceless interior vertices of the carved hole
    std::vector<Index> remap(smoothed.rows(), -1);
    for (Index f = 0; f < faces.rows(); ++f)
      for (int k = 0; k < 3; ++k) remap[faces(f, k)] = 0;
    Index nv = 0;
    for (Index v = 0; v < smoothed.rows(); ++v)
      if (remap[v] == 0) remap[v] = nv++;
    MatX packed(nv, 3);
    for (Index v = 0; v < smoothed.rows(); ++v)
      if (remap[v] >= 0) packed.row(remap[v]) = smoothed.row(v);
    for (Index f = 0; f < faces.rows(); ++f)
      for (int k = 0; k < 3; ++k) faces(f, k) = remap[faces(f, k)];
    for (Index& v : inlet) v = remap[v];
    for (Index& v : outlet) v = remap[v];
    Mesh mesh = build_mesh(packed, faces, inlet, outlet);
    vertex_normals(mesh);  // reject folded junction geometry
    return mesh;
  } catch (const InconsistentOrientation&) {
  } catch (const NonManifold&) {
  } catch (const ZeroNormal&) {
  }
  throw SelfIntersection("artery: could not stitch the bifurcation junction");
}

constexpr std::uint64_t kSubSeedStride = 0x9e3779b97f4a7c15ull;

// Scrambles user seeds before they reach the engine. Consecutive integers
// seed mt19937_64 into correlated streams, which shows up as multi-sigma
// biases in the sampled atlas statistics over blocks of adjacent seeds.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

ArteryGeometry artery_centerlines(const ArterySpec& spec, int samples) {
  ArteryGeometry geo;
  if (spec.kind == ArteryKind::single) {
    double ext = 0.0;
    const DensePath path = single_path(spec, &ext);
    const double l_main = path.length() - 2.0 * ext;
    Centerline c;
    const Index m = path.points.rows();
    c.points = path.points;
    c.arclen = path.arclen;
    c.radius = VecX(m);
    for (Index i = 0; i < m; ++i)
      c.radius[i] = stenosed_radius(spec, path.arclen[i], ext, l_main);
    geo.branches.push_back(std::move(c));
    geo.bifurcation_s = 0.0;
    return geo;
  }
  const BifPaths paths = bifurcation_paths(spec);
  Centerline main_c;
  main_c.points = paths.main.points;
  main_c.arclen = paths.main.arclen;
  main_c.radius = VecX(paths.main.points.rows());
  for (Index i = 0; i < main_c.points.rows(); ++i)
    main_c.radius[i] = main_radius(spec, paths, main_c.arclen[i]);
  geo.branches.push_back(std::move(main_c));
  // side branch restricted to the part past the bifurcation
  std::vector<Index> keep;
  for (Index i = 0; i < paths.sb.points.rows(); ++i)
    if (paths.sb.arclen[i] >= paths.s_bif_sb) keep.push_back(i);
  Centerline sb_c;
  sb_c.points = MatX(static_cast<Index>(keep.size()), 3);
  sb_c.arclen = VecX(static_cast<Index>(keep.size()));
  sb_c.radius = VecX(static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    sb_c.points.row(static_cast<Index>(k)) = paths.sb.points.row(keep[k]);
    sb_c.arclen[static_cast<Index>(k)] = paths.sb.arclen[keep[k]];
    sb_c.radius[static_cast<Index>(k)] =
        sb_radius(spec, paths, paths.sb.arclen[keep[k]]);
  }
  geo.branches.push_back(std::move(sb_c));
  geo.bifurcation_s = paths.s_bif_main;
  (void)samples;
  return geo;
}

Mesh artery_mesh(const ArterySpec& spec, const SynthConfig& config) {
  if (config.segments < 8 || config.spacing <= 0.0)
    throw ConfigInvalid("artery: invalid loft resolution");
  return spec.kind == ArteryKind::single ? single_mesh(spec, config)
                                         : bifurcating_mesh(spec, config);
}

ArterySample synth_single(std::uint64_t seed, const SynthConfig& config) {
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::mt19937_64 rng(mix_seed(seed + kSubSeedStride * attempt));
    ArterySpec spec;
    spec.kind = ArteryKind::single;
    spec.seed = seed;
    std::uniform_real_distribution<double> ur(1.25, 2.0);
    spec.base_radius = ur(rng);
    MatX ctrl(8, 3);
    ctrl.setZero();
    std::uniform_real_distribution<double> uy(-2.0, 2.0);
    for (Index i = 0; i < 8; ++i) {
      ctrl(i, 0) = kCtrlSpacingSingle * i;
      if (i > 0) ctrl(i, 1) = ctrl(i - 1, 1) + uy(rng);
    }
    spec.control_points = ctrl;
    std::uniform_int_distribution<int> un(0, 2);
    const int n_sten = un(rng);
    std::uniform_real_distribution<double> up(0.25, 0.75), us(0.15, 0.5),
        ua(0.0, 1.0);
    for (int k = 0; k < n_sten; ++k) {
      Stenosis st;
      for (int tries = 0; tries < 20; ++tries) {
        st.position = up(rng);
        bool ok = true;
        for (const Stenosis& other : spec.stenoses)
          ok &= std::abs(st.position - other.position) > 0.2;
        if (ok) break;
      }
      st.severity = us(rng);
      st.asymmetry = ua(rng);
      spec.stenoses.push_back(st);
    }
    std::uniform_real_distribution<double> uq(1.87, 4.36);
    spec.flow = uq(rng);
    try {
      Mesh mesh = artery_mesh(spec, config);
      return {std::move(spec), std::move(mesh)};
    } catch (const SelfIntersection&) {
      continue;
    }
  }
  throw SelfIntersection("synth_single: exhausted regeneration attempts");
}

ArterySample synth_bifurcating(std::uint64_t seed,
                               const SynthConfig& config) {
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::mt19937_64 rng(mix_seed(seed + kSubSeedStride * attempt));
    std::normal_distribution<double> n01(0.0, 1.0);
    ArterySpec spec;
    spec.kind = ArteryKind::bifurcating;
    spec.seed = seed;

    // one shared standard normal drives all three radii: the atlas vessels
    // are strongly correlated, and perfect rank correlation preserves the
    // printed marginals while keeping r_pmv > r_dmv > r_sb
    int draws = 0;
    for (;; ++draws) {
      if (draws >= 10000)
        throw RejectionBudgetExceeded(
            "synth_bifurcating: bifurcation-law rejection budget exhausted");
      const double z = n01(rng);
      spec.r_pmv = 1.75 + 0.4 * z;
      spec.r_dmv = 1.6 + 0.35 * z;
      spec.r_sb = 1.5 + 0.35 * z;
      if (spec.r_sb < 0.5) continue;
      if (!(spec.r_pmv > spec.r_dmv && spec.r_dmv > spec.r_sb)) continue;
      const double ratio = spec.r_sb / spec.r_dmv;
      if (!(ratio > 0.4 && ratio < 1.0)) continue;
      spec.eps_law = bifurcation_residual(0.2 * spec.r_pmv, 0.2 * spec.r_dmv,
                                          0.2 * spec.r_sb);
      if (std::abs(spec.eps_law) <= 0.165) break;
    }
    for (;;) {
      spec.beta = 78.9 + 23.1 * n01(rng);
      spec.beta_prime = 61.5 + 21.5 * n01(rng);
      spec.gamma = 9.5 + 21.5 * n01(rng);
      // the side branch must leave downwards and the branches must separate
      if (spec.beta_prime > 1.0 && spec.beta > 30.0) break;
    }
    bifurcation_control_points(spec);
    std::uniform_real_distribution<double> uq(1.87, 4.36);
    spec.flow = uq(rng);
    try {
      Mesh mesh = artery_mesh(spec, config);
      return {std::move(spec), std::move(mesh)};
    } catch (const SelfIntersection&) {
      continue;
    } catch (const RadiusUnderflow&) {
      continue;
    }
  }
  throw SelfIntersection("synth_bifurcating: exhausted regeneration attempts");
}

double bifurcation_residual(double d_pmv, double d_dmv, double d_sb,
                            double a) {
  return std::pow(d_pmv, a) - std::pow(d_dmv, a) - std::pow(d_sb, a);
}

VecX flow_waveform(int T) {
  if (T < 1) throw ConfigInvalid("flow_waveform: T must be positive");
  VecX w(T);
  if (T == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int k = 0; k < T; ++k)
    w[k] = 0.2 + 0.8 * (1.0 - std::cos(kTwoPi * k / T));
  w /= w.mean();
  return w;
}

namespace {

struct BranchStation {
  int branch = 0;
  Index sample = 0;
  double dist = 0.0;
};

BranchStation nearest_station(const ArteryGeometry& geo, const Vec3& q) {
  BranchStation best;
  best.dist = 1e300;
  for (std::size_t b = 0; b < geo.branches.size(); ++b) {
    const Centerline& c = geo.branches[b];
    for (Index i = 0; i < c.points.rows(); ++i) {
      const double d = (c.points.row(i).transpose() - q).norm();
      if (d < best.dist) {
        best = {static_cast<int>(b), i, d};
      }
    }
  }
  return best;
}

// Per-branch flow in ml/s at a station; splits proportionally to d^2.4.
double branch_flow(const ArterySpec& spec, const ArteryGeometry& geo,
                   int branch, double s, double q_total) {
  if (spec.kind == ArteryKind::single) return q_total;
  const double wd = std::pow(0.2 * spec.r_dmv, 2.4);
  const double ws = std::pow(0.2 * spec.r_sb, 2.4);
  const double q_dmv = q_total * wd / (wd + ws);
  if (branch == 1) return q_total - q_dmv;
  return s <= geo.bifurcation_s ? q_total : q_dmv;
}

Vec3 branch_tangent(const Centerline& c, Index i) {
  const Index m = c.points.rows();
  const Index a = std::max<Index>(0, i - 1), b = std::min(m - 1, i + 1);
  return (c.points.row(b) - c.points.row(a)).normalized().transpose();
}

}  // namespace

MatX wss_labels(const ArterySpec& spec, const Mesh& mesh, double flow,
                int T) {
  const ArteryGeometry geo = artery_centerlines(spec);
  const VecX w = flow_waveform(T);
  const MatX normals = vertex_normals(mesh);
  const Index n = mesh.vertex_count();
  MatX label(n, 3 * T);
  for (Index v = 0; v < n; ++v) {
    const Vec3 q = mesh.position(v);
    const BranchStation st = nearest_station(geo, q);
    const Centerline& c = geo.branches[st.branch];
    const double r_cm = 0.1 * c.radius[st.sample];
    if (r_cm <= 0.0) throw RadiusUnderflow("wss_labels: zero lumen radius");
    const double q_b =
        branch_flow(spec, geo, st.branch, c.arclen[st.sample], flow);
    const Vec3 nrm = normals.row(v).transpose();
    Vec3 dir = branch_tangent(c, st.sample);
    dir -= dir.dot(nrm) * nrm;
    const double dn = dir.norm();
    dir = dn > 1e-9 ? Vec3(dir / dn) : Vec3::Zero();
    // 4 mu Q / (pi r^3) in dyn/cm^2; divide by 10 for Pa
    const double mag = 4.0 * kMu * q_b / (kPi * r_cm * r_cm * r_cm) / 10.0;
    for (int k = 0; k < T; ++k)
      label.block<1, 3>(v, 3 * k) = (mag * w[k] * dir).transpose();
  }
  return label;
}

MatX pressure_labels(const ArterySpec& spec, const Mesh& mesh, double flow,
                     int T) {
  const ArteryGeometry geo = artery_centerlines(spec);
  const VecX w = flow_waveform(T);
  const MatX normals = vertex_normals(mesh);
  const Index n = mesh.vertex_count();
  MatX label(n, 3 * T);
  for (int k = 0; k < T; ++k) {
    const double q_t = flow * w[k];
    // pressure along each branch, kPa; anchored at the main outlet
    std::vector<VecX> pressure;
    const Centerline& main_c = geo.branches[0];
    VecX p_main(main_c.points.rows());
    p_main[p_main.size() - 1] = kPOutKpa;
    for (Index i = p_main.size() - 2; i >= 0; --i) {
      const double ds_cm = 0.1 * (main_c.arclen[i + 1] - main_c.arclen[i]);
      auto grad = [&](Index j) {
        const double r = 0.1 * main_c.radius[j];
        const double q_b = branch_flow(spec, geo, 0, main_c.arclen[j], q_t);
        return 8.0 * kMu * q_b / (kPi * r * r * r * r);  // dyn/cm^2 per cm
      };
      p_main[i] = p_main[i + 1] + 0.5 * (grad(i) + grad(i + 1)) * ds_cm * 1e-4;
    }
    pressure.push_back(p_main);
    if (geo.branches.size() > 1) {
      const Centerline& sb_c = geo.branches[1];
      // bifurcation pressure from the main branch
      double p_bif = kPOutKpa;
      for (Index i = 0; i < main_c.points.rows(); ++i)
        if (main_c.arclen[i] >= geo.bifurcation_s) {
          p_bif = p_main[i];
          break;
        }
      VecX p_sb(sb_c.points.rows());
      p_sb[0] = p_bif;
      for (Index i = 1; i < p_sb.size(); ++i) {
        const double ds_cm = 0.1 * (sb_c.arclen[i] - sb_c.arclen[i - 1]);
        auto grad = [&](Index j) {
          const double r = 0.1 * sb_c.radius[j];
          const double q_b = branch_flow(spec, geo, 1, sb_c.arclen[j], q_t);
          return 8.0 * kMu * q_b / (kPi * r * r * r * r);
        };
        p_sb[i] = p_sb[i - 1] - 0.5 * (grad(i) + grad(i - 1)) * ds_cm * 1e-4;
      }
      pressure.push_back(p_sb);
    }
    for (Index v = 0; v < n; ++v) {
      const BranchStation st = nearest_station(geo, mesh.position(v));
      const double p = pressure[st.branch][st.sample];
      label.block<1, 3>(v, 3 * k) =
          (p * normals.row(v).transpose()).transpose();
    }
  }
  return label;
}

}  // namespace gem
