#include "poseval/ply.hpp"

#include "poseval/error.hpp"
#include "poseval/text_format.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace poseval {

namespace {

enum class ScalarType { int8, uint8, int16, uint16, int32, uint32, float32, float64 };

std::optional<ScalarType> scalar_type(std::string_view name) {
  if (name == "char" || name == "int8") return ScalarType::int8;
  if (name == "uchar" || name == "uint8") return ScalarType::uint8;
  if (name == "short" || name == "int16") return ScalarType::int16;
  if (name == "ushort" || name == "uint16") return ScalarType::uint16;
  if (name == "int" || name == "int32") return ScalarType::int32;
  if (name == "uint" || name == "uint32") return ScalarType::uint32;
  if (name == "float" || name == "float32") return ScalarType::float32;
  if (name == "double" || name == "float64") return ScalarType::float64;
  return std::nullopt;
}

std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::int8:
    case ScalarType::uint8: return 1;
    case ScalarType::int16:
    case ScalarType::uint16: return 2;
    case ScalarType::int32:
    case ScalarType::uint32:
    case ScalarType::float32: return 4;
    case ScalarType::float64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::float32;
  bool is_list = false;
  ScalarType count_type = ScalarType::uint8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
};

[[noreturn]] void fail(const std::string& source, const std::string& what) {
  throw Error(ErrorKind::ParseError, source + ": " + what);
}

Header parse_header(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "ply") fail(source, "missing 'ply' magic");
  Header header;
  bool have_format = false;
  while (true) {
    if (!std::getline(in, line)) fail(source, "unterminated header");
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    const auto key = tokens[0];
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      if (tokens.size() < 2) fail(source, "malformed format line");
      if (tokens[1] == "ascii") {
        header.binary = false;
      } else if (tokens[1] == "binary_little_endian") {
        header.binary = true;
      } else {
        fail(source, "unsupported PLY format '" + std::string(tokens[1]) + "'");
      }
      have_format = true;
    } else if (key == "element") {
      if (tokens.size() != 3) fail(source, "malformed element line: " + line);
      const auto count = parse_int(tokens[2]);
      if (!count || *count < 0) fail(source, "bad element count: " + line);
      header.elements.push_back({std::string(tokens[1]), static_cast<std::size_t>(*count), {}});
    } else if (key == "property") {
      if (header.elements.empty()) fail(source, "property before any element");
      Property prop;
      if (tokens.size() == 5 && tokens[1] == "list") {
        const auto ct = scalar_type(tokens[2]);
        const auto vt = scalar_type(tokens[3]);
        if (!ct || !vt) fail(source, "unknown list property type: " + line);
        prop = {std::string(tokens[4]), *vt, true, *ct};
      } else if (tokens.size() == 3) {
        const auto t = scalar_type(tokens[1]);
        if (!t) fail(source, "unknown property type: " + line);
        prop = {std::string(tokens[2]), *t, false, ScalarType::uint8};
      } else {
        fail(source, "malformed property line: " + line);
      }
      header.elements.back().properties.push_back(prop);
    } else {
      fail(source, "unexpected header line: " + line);
    }
  }
  if (!have_format) fail(source, "missing format line");
  return header;
}

double read_binary_scalar(std::istream& in, ScalarType t, const std::string& source) {
  std::array<unsigned char, 8> buf{};
  const auto n = scalar_size(t);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n))) {
    fail(source, "truncated binary body");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf.begin(), buf.begin() + static_cast<long>(n));
  }
  switch (t) {
    case ScalarType::int8: return static_cast<std::int8_t>(buf[0]);
    case ScalarType::uint8: return buf[0];
    case ScalarType::int16: { std::int16_t v; std::memcpy(&v, buf.data(), 2); return v; }
    case ScalarType::uint16: { std::uint16_t v; std::memcpy(&v, buf.data(), 2); return v; }
    case ScalarType::int32: { std::int32_t v; std::memcpy(&v, buf.data(), 4); return v; }
    case ScalarType::uint32: { std::uint32_t v; std::memcpy(&v, buf.data(), 4); return v; }
    case ScalarType::float32: { float v; std::memcpy(&v, buf.data(), 4); return v; }
    case ScalarType::float64: { double v; std::memcpy(&v, buf.data(), 8); return v; }
  }
  return 0;
}

struct XyzSlots {
  int x = -1, y = -1, z = -1;
};

XyzSlots locate_xyz(const Element& vertex, const std::string& source) {
  XyzSlots slots;
  for (std::size_t i = 0; i < vertex.properties.size(); ++i) {
    const auto& p = vertex.properties[i];
    int* slot = p.name == "x" ? &slots.x : p.name == "y" ? &slots.y : p.name == "z" ? &slots.z : nullptr;
    if (!slot) continue;
    if (p.is_list) fail(source, "vertex coordinate '" + p.name + "' is a list");
    *slot = static_cast<int>(i);
  }
  if (slots.x < 0 || slots.y < 0 || slots.z < 0) fail(source, "vertex element lacks x/y/z");
  return slots;
}

}  // namespace

std::vector<Vec3> read_ply_vertices(std::istream& in, const std::string& source) {
  const Header header = parse_header(in, source);
  const Element* vertex_element = nullptr;
  for (const auto& e : header.elements) {
    if (e.name == "vertex") vertex_element = &e;
  }
  if (!vertex_element) fail(source, "no vertex element");
  const XyzSlots slots = locate_xyz(*vertex_element, source);

  std::vector<Vec3> vertices;
  vertices.reserve(vertex_element->count);

  for (const auto& element : header.elements) {
    const bool is_vertex = &element == vertex_element;
    for (std::size_t row = 0; row < element.count; ++row) {
      if (header.binary) {
        Vec3 v = Vec3::Zero();
        for (std::size_t pi = 0; pi < element.properties.size(); ++pi) {
          const auto& p = element.properties[pi];
          if (p.is_list) {
            const double count = read_binary_scalar(in, p.count_type, source);
            if (count < 0) fail(source, "negative list length");
            for (long k = 0; k < static_cast<long>(count); ++k) read_binary_scalar(in, p.type, source);
            continue;
          }
          const double value = read_binary_scalar(in, p.type, source);
          if (is_vertex) {
            const int idx = static_cast<int>(pi);
            if (idx == slots.x) v.x() = value;
            else if (idx == slots.y) v.y() = value;
            else if (idx == slots.z) v.z() = value;
          }
        }
        if (is_vertex) vertices.push_back(v);
      } else {
        std::string line;
        do {
          if (!std::getline(in, line)) {
            fail(source, "truncated ascii body in element '" + element.name + "' at row " +
                             std::to_string(row));
          }
        } while (trim(line).empty());
        if (!is_vertex) continue;
        const auto tokens = split_whitespace(line);
        // Lists make the token count variable, so walk properties in order.
        Vec3 v = Vec3::Zero();
        std::size_t cursor = 0;
        for (std::size_t pi = 0; pi < element.properties.size(); ++pi) {
          const auto& p = element.properties[pi];
          if (cursor >= tokens.size()) fail(source, "short vertex row " + std::to_string(row));
          if (p.is_list) {
            const auto count = parse_int(tokens[cursor]);
            if (!count || *count < 0) fail(source, "bad list length at vertex row " + std::to_string(row));
            cursor += 1 + static_cast<std::size_t>(*count);
            continue;
          }
          const auto value = parse_double(tokens[cursor++]);
          if (!value) fail(source, "bad number at vertex row " + std::to_string(row));
          const int idx = static_cast<int>(pi);
          if (idx == slots.x) v.x() = *value;
          else if (idx == slots.y) v.y() = *value;
          else if (idx == slots.z) v.z() = *value;
        }
        vertices.push_back(v);
      }
    }
    if (is_vertex) {
      // Nothing after the vertex block is needed.
      break;
    }
  }
  if (vertices.empty()) fail(source, "mesh has no vertices");
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite()) fail(source, "non-finite vertex " + std::to_string(i));
  }
  return vertices;
}

std::vector<Vec3> read_ply_vertices(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  return read_ply_vertices(in, path.string());
}

void write_ply_vertices(std::ostream& out, const std::vector<Vec3>& vertices, PlyEncoding encoding) {
  out << "ply\n"
      << "format " << (encoding == PlyEncoding::ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
      << "element vertex " << vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "end_header\n";
  for (const auto& v : vertices) {
    if (encoding == PlyEncoding::ascii) {
      out << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z()) << '\n';
    } else {
      for (int i = 0; i < 3; ++i) {
        std::array<unsigned char, 8> buf{};
        const double value = v[i];
        std::memcpy(buf.data(), &value, 8);
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
        out.write(reinterpret_cast<const char*>(buf.data()), 8);
      }
    }
  }
}

}  // namespace poseval
