#include "gem/mesh_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gem {

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (Index v = 0; v < mesh.vertex_count(); ++v)
    out << "v " << mesh.vertices(v, 0) << ' ' << mesh.vertices(v, 1) << ' '
        << mesh.vertices(v, 2) << '\n';
  for (Index f = 0; f < mesh.face_count(); ++f)
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << '\n';
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Vec3> vs;
  std::vector<std::array<Index, 3>> fs;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      ss >> p[0] >> p[1] >> p[2];
      vs.push_back(p);
    } else if (tag == "f") {
      std::array<Index, 3> f{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        ss >> tok;
        // strip optional /vt/vn suffixes
        f[k] = std::stoll(tok.substr(0, tok.find('/'))) - 1;
      }
      fs.push_back(f);
    }
  }
  MatX vertices(static_cast<Index>(vs.size()), 3);
  for (std::size_t i = 0; i < vs.size(); ++i)
    vertices.row(static_cast<Index>(i)) = vs[i].transpose();
  Eigen::Matrix<Index, Eigen::Dynamic, 3> faces(static_cast<Index>(fs.size()),
                                                3);
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (int k = 0; k < 3; ++k) faces(static_cast<Index>(i), k) = fs[i][k];
  return build_mesh(vertices, faces);
}

void write_markers(const Mesh& mesh, const std::filesystem::path& path) {
  nlohmann::json j;
  j["inlet"] = mesh.inlet;
  j["outlet"] = mesh.outlet;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

void read_markers(Mesh& mesh, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  mesh.inlet = j.at("inlet").get<std::vector<Index>>();
  mesh.outlet = j.at("outlet").get<std::vector<Index>>();
}

}  // namespace gem
