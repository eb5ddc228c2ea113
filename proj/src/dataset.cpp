#include "gem/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace gem {

namespace {

nlohmann::json matrix_to_json(const MatX& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

MatX matrix_from_json(const nlohmann::json& rows, Index cols) {
  MatX m(static_cast<Index>(rows.size()), cols);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < cols; ++c)
      m(r, c) = rows.at(static_cast<std::size_t>(r))
                    .at(static_cast<std::size_t>(c))
                    .get<double>();
  return m;
}

}  // namespace

std::string artery_spec_to_json(const ArterySpec& spec) {
  nlohmann::json j;
  j["kind"] = spec.kind == ArteryKind::single ? "single" : "bifurcating";
  j["seed"] = spec.seed;
  j["control_points"] = matrix_to_json(spec.control_points);
  j["branch_points"] = matrix_to_json(spec.branch_points);
  j["base_radius"] = spec.base_radius;
  j["stenoses"] = nlohmann::json::array();
  for (const Stenosis& st : spec.stenoses)
    j["stenoses"].push_back({{"position", st.position},
                             {"severity", st.severity},
                             {"asymmetry", st.asymmetry}});
  j["beta"] = spec.beta;
  j["beta_prime"] = spec.beta_prime;
  j["gamma"] = spec.gamma;
  j["r_pmv"] = spec.r_pmv;
  j["r_dmv"] = spec.r_dmv;
  j["r_sb"] = spec.r_sb;
  j["eps_law"] = spec.eps_law;
  j["flow"] = spec.flow;
  j["waveform"] = spec.waveform;
  return j.dump(2);
}

ArterySpec artery_spec_from_json(const std::string& json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("artery spec: ") + e.what());
  }
  ArterySpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "single") {
    spec.kind = ArteryKind::single;
  } else if (kind == "bifurcating") {
    spec.kind = ArteryKind::bifurcating;
  } else {
    throw ConfigInvalid("artery spec: unknown kind '" + kind + "'");
  }
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.control_points = matrix_from_json(j.at("control_points"), 3);
  spec.branch_points = matrix_from_json(j.at("branch_points"), 3);
  spec.base_radius = j.at("base_radius").get<double>();
  for (const auto& st : j.at("stenoses"))
    spec.stenoses.push_back({st.at("position").get<double>(),
                             st.at("severity").get<double>(),
                             st.at("asymmetry").get<double>()});
  spec.beta = j.at("beta").get<double>();
  spec.beta_prime = j.at("beta_prime").get<double>();
  spec.gamma = j.at("gamma").get<double>();
  spec.r_pmv = j.at("r_pmv").get<double>();
  spec.r_dmv = j.at("r_dmv").get<double>();
  spec.r_sb = j.at("r_sb").get<double>();
  spec.eps_law = j.at("eps_law").get<double>();
  spec.flow = j.at("flow").get<double>();
  spec.waveform = j.at("waveform").get<int>();
  return spec;
}

void write_sample(const LabeledSample& sample,
                  const std::filesystem::path& stem) {
  if (sample.labels.rows() != sample.mesh.vertex_count() ||
      sample.labels.cols() != 3 * sample.time_steps)
    throw ShapeMismatch("write_sample: labels are not V x 3T");
  std::filesystem::path obj = stem, side = stem, csv = stem;
  write_obj(sample.mesh, obj.replace_extension(".obj"));

  nlohmann::json j;
  j["inlet"] = sample.mesh.inlet;
  j["outlet"] = sample.mesh.outlet;
  j["spec"] = nlohmann::json::parse(artery_spec_to_json(sample.spec));
  j["target"] = sample.target;
  j["time_steps"] = sample.time_steps;
  std::ofstream out(side.replace_extension(".json"));
  if (!out) throw IoError("cannot open " + side.string() + " for writing");
  out << j.dump(2) << '\n';

  std::ofstream lab(csv.replace_extension(".csv"));
  if (!lab) throw IoError("cannot open " + csv.string() + " for writing");
  lab.precision(17);
  lab << "vertex,t,x,y,z\n";
  for (Index v = 0; v < sample.labels.rows(); ++v)
    for (int k = 0; k < sample.time_steps; ++k)
      lab << v << ',' << k << ',' << sample.labels(v, 3 * k) << ','
          << sample.labels(v, 3 * k + 1) << ',' << sample.labels(v, 3 * k + 2)
          << '\n';
}

LabeledSample read_sample(const std::filesystem::path& stem) {
  LabeledSample sample;
  std::filesystem::path obj = stem, side = stem, csv = stem;
  sample.mesh = read_obj(obj.replace_extension(".obj"));

  std::ifstream in(side.replace_extension(".json"));
  if (!in) throw IoError("cannot open " + side.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(side.string() + ": " + e.what());
  }
  sample.mesh.inlet = j.at("inlet").get<std::vector<Index>>();
  sample.mesh.outlet = j.at("outlet").get<std::vector<Index>>();
  sample.spec = artery_spec_from_json(j.at("spec").dump());
  sample.target = j.at("target").get<std::string>();
  sample.time_steps = j.at("time_steps").get<int>();

  sample.labels = MatX::Zero(sample.mesh.vertex_count(),
                             3 * static_cast<Index>(sample.time_steps));
  std::ifstream lab(csv.replace_extension(".csv"));
  if (!lab) throw IoError("cannot open " + csv.string());
  std::string line;
  std::getline(lab, line);  // header
  while (std::getline(lab, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    double cells[5];
    for (int i = 0; i < 5; ++i) {
      if (!std::getline(ss, tok, ','))
        throw IoError(csv.string() + ": short label row");
      cells[i] = std::stod(tok);
    }
    const Index v = static_cast<Index>(cells[0]);
    const int k = static_cast<int>(cells[1]);
    if (v < 0 || v >= sample.labels.rows() || k < 0 || k >= sample.time_steps)
      throw IoError(csv.string() + ": label row out of range");
    for (int i = 0; i < 3; ++i) sample.labels(v, 3 * k + i) = cells[2 + i];
  }
  return sample;
}

std::vector<std::filesystem::path> list_samples(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> stems;
  if (!std::filesystem::is_directory(dir))
    throw IoError(dir.string() + " is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".obj") {
      auto stem = entry.path();
      stems.push_back(stem.replace_extension(""));
    }
  std::sort(stems.begin(), stems.end());
  return stems;
}

void write_vtk(const Mesh& mesh, const MatX& labels, const std::string& field,
               const std::filesystem::path& path) {
  if (labels.rows() != mesh.vertex_count() || labels.cols() % 3 != 0)
    throw ShapeMismatch("write_vtk: labels are not V x 3T");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "# vtk DataFile Version 3.0\n"
      << field << " field\nASCII\nDATASET POLYDATA\n";
  out << "POINTS " << mesh.vertex_count() << " double\n";
  for (Index v = 0; v < mesh.vertex_count(); ++v)
    out << mesh.vertices(v, 0) << ' ' << mesh.vertices(v, 1) << ' '
        << mesh.vertices(v, 2) << '\n';
  out << "POLYGONS " << mesh.face_count() << ' ' << 4 * mesh.face_count()
      << '\n';
  for (Index f = 0; f < mesh.face_count(); ++f)
    out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' '
        << mesh.faces(f, 2) << '\n';
  out << "POINT_DATA " << mesh.vertex_count() << '\n';
  const int T = static_cast<int>(labels.cols() / 3);
  for (int k = 0; k < T; ++k) {
    out << "VECTORS " << field << "_t" << k << " double\n";
    for (Index v = 0; v < mesh.vertex_count(); ++v)
      out << labels(v, 3 * k) << ' ' << labels(v, 3 * k + 1) << ' '
          << labels(v, 3 * k + 2) << '\n';
  }
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace gem
