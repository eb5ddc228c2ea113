#pragma once

#include <filesystem>

#include "gem/mesh.hpp"

namespace gem {

// ASCII OBJ, v/f records only. Boundary markers live in a JSON sidecar
// {"inlet":[...],"outlet":[...]} next to the OBJ.
void write_obj(const Mesh& mesh, const std::filesystem::path& path);
Mesh read_obj(const std::filesystem::path& path);

void write_markers(const Mesh& mesh, const std::filesystem::path& path);
void read_markers(Mesh& mesh, const std::filesystem::path& path);

}  // namespace gem
