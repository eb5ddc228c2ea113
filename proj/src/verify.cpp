#include "gem/verify.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <json.hpp>
#include <map>
#include <random>

namespace gem {

namespace {

MatX model_inputs(nn::Model& model, const SampleGeometry& geo) {
  return model.config().conv_kind == nn::ConvKind::gem
             ? gem_input_features(geo).values
             : baseline_input_features(geo);
}

// Per-vertex row norms, stacked over the batch.
VecX row_norms(const nn::Batch& batch) {
  Index total = 0;
  for (const MatX& m : batch) total += m.rows();
  VecX out(total);
  Index at = 0;
  for (const MatX& m : batch)
    for (Index v = 0; v < m.rows(); ++v) out[at++] = m.row(v).norm();
  return out;
}

// Compare two evaluations; `expected` is the reference output already mapped
// into the moved frame.
void fill_report(TransformReport& rep,
                 const std::vector<std::pair<std::string, nn::Batch>>& ref,
                 const std::vector<std::pair<std::string, nn::Batch>>& moved,
                 const MatX& expected) {
  const MatX& got = moved.back().second[0];
  if (expected.rows() != got.rows() || expected.cols() != got.cols())
    throw ShapeMismatch("verify: two-path outputs differ in shape");
  double scale = 1e-12;
  for (Index v = 0; v < expected.rows(); ++v)
    scale = std::max(scale, expected.row(v).norm());
  double sum = 0.0;
  for (Index v = 0; v < expected.rows(); ++v) {
    const double d = (expected.row(v) - got.row(v)).norm() / scale;
    rep.max_rel = std::max(rep.max_rel, d);
    sum += d;
  }
  rep.mean_rel = sum / static_cast<double>(expected.rows());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const VecX na = row_norms(ref[i].second);
    const VecX nb = row_norms(moved[i].second);
    const double d = (na - nb).norm() / std::max(na.norm(), 1e-12);
    rep.layers.emplace_back(ref[i].first, d);
  }
}

}  // namespace

std::string TransformReport::to_json() const {
  nlohmann::json j;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j["rotation"][r][c] = rotation(r, c);
  for (int k = 0; k < 3; ++k) j["translation"][k] = translation[k];
  j["max_rel"] = max_rel;
  j["mean_rel"] = mean_rel;
  for (const auto& [name, d] : layers) j["layers"][name] = d;
  return j.dump(2);
}

TransformReport check_transform(nn::Model& model, const Mesh& mesh,
                                const GeometryConfig& config,
                                const Mat3& rotation,
                                const Vec3& translation) {
  TransformReport rep;
  rep.rotation = rotation;
  rep.translation = translation;

  const SampleGeometry geo_a = build_sample_geometry(mesh, config);
  const auto trace_a =
      model.forward_trace({&geo_a}, {model_inputs(model, geo_a)});

  MatX moved_vertices = mesh.vertices * rotation.transpose();
  moved_vertices.rowwise() += translation.transpose();
  const Mesh moved =
      build_mesh(moved_vertices, mesh.faces, mesh.inlet, mesh.outlet);
  const SampleGeometry geo_b = build_sample_geometry(moved, config);
  const auto trace_b =
      model.forward_trace({&geo_b}, {model_inputs(model, geo_b)});

  // rho_out(g): rotate each ambient 3-vector of the reference prediction
  MatX expected = trace_a.back().second[0];
  for (Index v = 0; v < expected.rows(); ++v)
    for (Index k = 0; k + 2 < expected.cols(); k += 3)
      expected.block<1, 3>(v, k) =
          (rotation * expected.block<1, 3>(v, k).transpose()).transpose();
  fill_report(rep, trace_a, trace_b, expected);
  return rep;
}

TransformReport check_se3(nn::Model& model, const Mesh& mesh,
                          const GeometryConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Quaterniond q(n01(rng), n01(rng), n01(rng), n01(rng));
  q.normalize();
  std::uniform_real_distribution<double> ut(-30.0, 30.0);
  const Vec3 t(ut(rng), ut(rng), ut(rng));
  return check_transform(model, mesh, config, q.toRotationMatrix(), t);
}

TransformReport check_gauge(nn::Model& model, const Mesh& mesh,
                            const GeometryConfig& config, std::uint64_t seed) {
  TransformReport rep;
  const SampleGeometry geo_a = build_sample_geometry(mesh, config);
  const auto trace_a =
      model.forward_trace({&geo_a}, {model_inputs(model, geo_a)});

  GeometryConfig regauged = config;
  regauged.gauge_seed = seed;
  const SampleGeometry geo_b = build_sample_geometry(mesh, regauged);
  const auto trace_b =
      model.forward_trace({&geo_b}, {model_inputs(model, geo_b)});

  fill_report(rep, trace_a, trace_b, trace_a.back().second[0]);
  return rep;
}

Mesh remesh_refine(const Mesh& mesh) {
  std::map<std::pair<Index, Index>, Index> midpoint;
  const Index v0 = mesh.vertex_count();
  std::vector<Vec3> extra;
  auto mid = [&](Index a, Index b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Index id = v0 + static_cast<Index>(extra.size());
    extra.push_back(0.5 * (mesh.position(a) + mesh.position(b)));
    midpoint.emplace(key, id);
    return id;
  };
  Eigen::Matrix<Index, Eigen::Dynamic, 3> faces(4 * mesh.face_count(), 3);
  Index t = 0;
  for (Index f = 0; f < mesh.face_count(); ++f) {
    const Index a = mesh.faces(f, 0), b = mesh.faces(f, 1),
                c = mesh.faces(f, 2);
    const Index ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
    faces.row(t++) << a, ab, ca;
    faces.row(t++) << ab, b, bc;
    faces.row(t++) << ca, bc, c;
    faces.row(t++) << ab, bc, ca;
  }
  MatX vertices(v0 + static_cast<Index>(extra.size()), 3);
  vertices.topRows(v0) = mesh.vertices;
  for (std::size_t i = 0; i < extra.size(); ++i)
    vertices.row(v0 + static_cast<Index>(i)) = extra[i].transpose();
  auto extend = [&](const std::vector<Index>& marked) {
    std::vector<char> is(static_cast<std::size_t>(v0), 0);
    for (Index v : marked) is[static_cast<std::size_t>(v)] = 1;
    std::vector<Index> out = marked;
    for (const auto& [key, id] : midpoint)
      if (is[static_cast<std::size_t>(key.first)] &&
          is[static_cast<std::size_t>(key.second)])
        out.push_back(id);
    return out;
  };
  return build_mesh(vertices, faces, extend(mesh.inlet), extend(mesh.outlet));
}

ResampledSurface remesh_resample(const Mesh& mesh, double keep_fraction,
                                 std::uint64_t seed) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
    throw ConfigInvalid("remesh_resample: keep fraction must be in (0, 1]");
  const Index n = mesh.vertex_count();
  const Index keep = std::max<Index>(
      1, static_cast<Index>(std::lround(keep_fraction * n)));
  std::vector<Index> ids(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) ids[static_cast<std::size_t>(v)] = v;
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(keep));
  std::sort(ids.begin(), ids.end());
  const MatX normals = vertex_normals(mesh);
  ResampledSurface out;
  out.kept = ids;
  out.positions = MatX(keep, 3);
  out.normals = MatX(keep, 3);
  std::vector<Index> remap(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < keep; ++i) {
    const Index v = ids[static_cast<std::size_t>(i)];
    out.positions.row(i) = mesh.vertices.row(v);
    out.normals.row(i) = normals.row(v);
    remap[static_cast<std::size_t>(v)] = i;
  }
  for (Index v : mesh.inlet)
    if (remap[static_cast<std::size_t>(v)] >= 0)
      out.inlet.push_back(remap[static_cast<std::size_t>(v)]);
  return out;
}

std::vector<std::pair<FieldOp, int>> model_op_sequence(
    const nn::ModelConfig& config) {
  std::vector<std::pair<FieldOp, int>> ops;
  ops.emplace_back(FieldOp::conv, 0);  // stem
  for (int l = 0; l < config.levels; ++l) {
    for (int b = 0; b < config.blocks; ++b) {
      ops.emplace_back(FieldOp::conv, l);
      ops.emplace_back(FieldOp::conv, l);
    }
    if (l + 1 < config.levels) {
      ops.emplace_back(FieldOp::pool, l);
      ops.emplace_back(FieldOp::conv, l + 1);  // lift
    }
  }
  for (int l = config.levels - 2; l >= 0; --l) {
    ops.emplace_back(FieldOp::unpool, l);
    ops.emplace_back(FieldOp::conv, l);  // fuse after the skip concat
    for (int b = 0; b < config.blocks; ++b) {
      ops.emplace_back(FieldOp::conv, l);
      ops.emplace_back(FieldOp::conv, l);
    }
  }
  ops.emplace_back(FieldOp::conv, 0);  // head conv
  return ops;
}

std::vector<char> receptive_field(
    const std::vector<std::pair<FieldOp, int>>& ops, const SampleGeometry& geo,
    Index seed_vertex) {
  const int levels = geo.hierarchy.level_count();
  std::vector<std::vector<char>> mask(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l)
    mask[static_cast<std::size_t>(l)].assign(
        static_cast<std::size_t>(geo.level(l).positions.rows()), 0);
  if (seed_vertex < 0 || seed_vertex >= geo.vertex_count())
    throw ShapeMismatch("receptive_field: seed vertex out of range");
  mask[0][static_cast<std::size_t>(seed_vertex)] = 1;
  for (const auto& [op, l] : ops) {
    if (l < 0 || l >= levels ||
        (op != FieldOp::conv && l + 1 >= levels))
      throw LevelMismatch("receptive_field: op level outside the hierarchy");
    auto& fine = mask[static_cast<std::size_t>(l)];
    switch (op) {
      case FieldOp::conv: {
        const NeighborGraph& graph = geo.level(l).graph;
        std::vector<char> next = fine;
        for (Index v = 0; v < graph.vertex_count(); ++v)
          if (fine[static_cast<std::size_t>(v)])
            for (Index u : graph.neighbors(v))
              next[static_cast<std::size_t>(u)] = 1;
        fine = next;
        break;
      }
      case FieldOp::pool: {
        const ClusterMap& cm =
            geo.hierarchy.clusters[static_cast<std::size_t>(l)];
        auto& coarse = mask[static_cast<std::size_t>(l + 1)];
        for (std::size_t f = 0; f < cm.assignment.size(); ++f)
          if (fine[f])
            coarse[static_cast<std::size_t>(cm.assignment[f])] = 1;
        break;
      }
      case FieldOp::unpool: {
        const ClusterMap& cm =
            geo.hierarchy.clusters[static_cast<std::size_t>(l)];
        auto& coarse = mask[static_cast<std::size_t>(l + 1)];
        for (std::size_t f = 0; f < cm.assignment.size(); ++f)
          if (coarse[static_cast<std::size_t>(cm.assignment[f])]) fine[f] = 1;
        break;
      }
    }
  }
  return mask[0];
}

std::vector<char> receptive_field(const nn::ModelConfig& config,
                                  const SampleGeometry& geo,
                                  Index seed_vertex) {
  return receptive_field(model_op_sequence(config), geo, seed_vertex);
}

}  // namespace gem
