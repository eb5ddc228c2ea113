#pragma once

#include <filesystem>

#include "gem/artery.hpp"
#include "gem/mesh_io.hpp"

namespace gem {

std::string artery_spec_to_json(const ArterySpec& spec);
ArterySpec artery_spec_from_json(const std::string& json);

// One dataset entry on disk: stem.obj (mesh), stem.json (markers + spec +
// label metadata), stem.csv (per-vertex label rows: vertex, t, x, y, z).
struct LabeledSample {
  ArterySpec spec;
  Mesh mesh;
  MatX labels;  // V x 3T ambient vectors
  int time_steps = 1;
  std::string target = "wss";
};

void write_sample(const LabeledSample& sample,
                  const std::filesystem::path& stem);
LabeledSample read_sample(const std::filesystem::path& stem);

// Dataset stems (paths without extension) sorted by filename.
std::vector<std::filesystem::path> list_samples(
    const std::filesystem::path& dir);

// Legacy ASCII POLYDATA with one POINT_DATA VECTORS block per time step,
// named <field>_t{k}.
void write_vtk(const Mesh& mesh, const MatX& labels, const std::string& field,
               const std::filesystem::path& path);

// FNV-1a 64-bit content hash of a file, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace gem
