#pragma once

#include "poseval/se3.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace poseval {

// Vertex positions of a PLY mesh. Supports `ascii` and
// `binary_little_endian` bodies; faces, normals, colors and any other
// element or property are skipped. `source` names the input in errors.
std::vector<Vec3> read_ply_vertices(std::istream& in, const std::string& source);
std::vector<Vec3> read_ply_vertices(const std::filesystem::path& path);

enum class PlyEncoding { ascii, binary_little_endian };

// Vertex-only PLY writer with double-precision coordinates (used for
// fixtures and the stand-in model set).
void write_ply_vertices(std::ostream& out, const std::vector<Vec3>& vertices, PlyEncoding encoding);

}  // namespace poseval
