#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gmmcd/point_cloud.hpp"

namespace gmmcd {

enum class PlyFormat { ascii, binary_little_endian };

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;        // scalar type, or element type for lists
  bool is_list = false;
  std::string count_type;  // list count type
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

inline std::size_t ply_type_size(const std::string& t, const std::string& context) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32")
    return 4;
  if (t == "double" || t == "float64" || t == "int64" || t == "uint64") return 8;
  throw Error("load_ply: unknown property type '" + t + "' in: " + context);
}

inline bool ply_type_is_fp(const std::string& t) {
  return t == "float" || t == "float32" || t == "double" || t == "float64";
}

inline double read_binary_scalar(std::istream& in, const std::string& type) {
  unsigned char buf[8];
  const std::size_t sz = ply_type_size(type, "binary payload");
  if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(sz)))
    throw Error("load_ply: unexpected end of binary payload");
  // x86-64 is little-endian; binary_little_endian payloads read directly.
  if (type == "float" || type == "float32") {
    float f;
    std::memcpy(&f, buf, 4);
    return static_cast<double>(f);
  }
  if (type == "double" || type == "float64") {
    double d;
    std::memcpy(&d, buf, 8);
    return d;
  }
  if (type == "char" || type == "int8") return static_cast<double>(static_cast<std::int8_t>(buf[0]));
  if (type == "uchar" || type == "uint8") return static_cast<double>(buf[0]);
  std::int64_t v = 0;
  if (type == "short" || type == "int16") {
    std::int16_t x;
    std::memcpy(&x, buf, 2);
    v = x;
  } else if (type == "ushort" || type == "uint16") {
    std::uint16_t x;
    std::memcpy(&x, buf, 2);
    v = x;
  } else if (type == "int" || type == "int32") {
    std::int32_t x;
    std::memcpy(&x, buf, 4);
    v = x;
  } else if (type == "uint" || type == "uint32") {
    std::uint32_t x;
    std::memcpy(&x, buf, 4);
    v = static_cast<std::int64_t>(x);
  } else {
    std::memcpy(&v, buf, 8);
  }
  return static_cast<double>(v);
}

}  // namespace detail

/// Read a PLY point cloud: ASCII 1.0 or binary_little_endian 1.0 with float or
/// double x,y,z vertex properties. Extra vertex properties and non-vertex
/// elements are skipped. Malformed headers name the offending line; a NaN or
/// infinite coordinate names the offending vertex index.
inline PointCloud load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_ply: cannot open '" + path + "'");

  auto fail = [&](std::size_t line_no, const std::string& line, const std::string& why) -> Error {
    return Error("load_ply: " + why + " at header line " + std::to_string(line_no) + ": '" + line +
                 "'");
  };

  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw Error("load_ply: unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    return line;
  };

  next_line();
  if (line != "ply") throw fail(line_no, line, "expected 'ply' magic");

  std::optional<PlyFormat> format;
  std::vector<detail::PlyElement> elements;
  bool header_done = false;
  while (!header_done) {
    next_line();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment" || word == "obj_info" || word.empty()) continue;
    if (word == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (version != "1.0") throw fail(line_no, line, "unsupported PLY version");
      if (fmt == "ascii") format = PlyFormat::ascii;
      else if (fmt == "binary_little_endian") format = PlyFormat::binary_little_endian;
      else throw fail(line_no, line, "unsupported format '" + fmt + "'");
    } else if (word == "element") {
      detail::PlyElement el;
      long long count = -1;
      if (!(ls >> el.name >> count) || count < 0) throw fail(line_no, line, "malformed element");
      el.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(el));
    } else if (word == "property") {
      if (elements.empty()) throw fail(line_no, line, "property before any element");
      detail::PlyProperty prop;
      std::string t;
      ls >> t;
      if (t == "list") {
        prop.is_list = true;
        if (!(ls >> prop.count_type >> prop.type >> prop.name))
          throw fail(line_no, line, "malformed list property");
      } else {
        prop.type = t;
        if (!(ls >> prop.name)) throw fail(line_no, line, "malformed property");
      }
      elements.back().properties.push_back(std::move(prop));
    } else if (word == "end_header") {
      header_done = true;
    } else {
      throw fail(line_no, line, "unrecognized keyword '" + word + "'");
    }
  }
  if (!format) throw Error("load_ply: header has no format line");

  // Locate the vertex element and its x,y,z columns.
  const detail::PlyElement* vertex = nullptr;
  for (const auto& el : elements) {
    if (el.name == "vertex") vertex = &el;
  }
  if (!vertex) throw Error("load_ply: no vertex element in '" + path + "'");
  int xyz_col[3] = {-1, -1, -1};
  for (std::size_t p = 0; p < vertex->properties.size(); ++p) {
    const auto& prop = vertex->properties[p];
    int axis = prop.name == "x" ? 0 : prop.name == "y" ? 1 : prop.name == "z" ? 2 : -1;
    if (axis < 0) continue;
    if (prop.is_list) throw Error("load_ply: vertex property '" + prop.name + "' is a list");
    if (!detail::ply_type_is_fp(prop.type))
      throw Error("load_ply: vertex property '" + prop.name + "' must be float or double, got '" +
                  prop.type + "'");
    xyz_col[axis] = static_cast<int>(p);
  }
  for (int a = 0; a < 3; ++a) {
    if (xyz_col[a] < 0)
      throw Error(std::string("load_ply: vertex element lacks '") + "xyz"[a] + "' property");
  }

  Mat pts(static_cast<Eigen::Index>(vertex->count), 3);

  for (const auto& el : elements) {
    const bool is_vertex = (&el == vertex);
    for (std::size_t row = 0; row < el.count; ++row) {
      double coord[3] = {0, 0, 0};
      if (*format == PlyFormat::ascii) {
        if (!std::getline(in, line))
          throw Error("load_ply: unexpected end of data in element '" + el.name + "'");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
          const auto& prop = el.properties[p];
          if (prop.is_list) {
            long long count;
            if (!(ls >> count) || count < 0)
              throw Error("load_ply: malformed list in element '" + el.name + "'");
            double dummy;
            for (long long c = 0; c < count; ++c) ls >> dummy;
            continue;
          }
          double value;
          if (!(ls >> value))
            throw Error("load_ply: short data row in element '" + el.name + "' row " +
                        std::to_string(row));
          if (is_vertex) {
            for (int a = 0; a < 3; ++a)
              if (xyz_col[a] == static_cast<int>(p)) coord[a] = value;
          }
        }
      } else {
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
          const auto& prop = el.properties[p];
          if (prop.is_list) {
            const double count = detail::read_binary_scalar(in, prop.count_type);
            const std::size_t n = count < 0 ? 0 : static_cast<std::size_t>(count);
            const std::size_t skip = n * detail::ply_type_size(prop.type, prop.name);
            in.ignore(static_cast<std::streamsize>(skip));
            if (!in) throw Error("load_ply: unexpected end of binary payload");
            continue;
          }
          const double value = detail::read_binary_scalar(in, prop.type);
          if (is_vertex) {
            for (int a = 0; a < 3; ++a)
              if (xyz_col[a] == static_cast<int>(p)) coord[a] = value;
          }
        }
      }
      if (is_vertex) {
        for (int a = 0; a < 3; ++a) {
          if (!std::isfinite(coord[a]))
            throw Error("load_ply: non-finite coordinate at vertex " + std::to_string(row));
          pts(static_cast<Eigen::Index>(row), a) = coord[a];
        }
      }
    }
  }

  return PointCloud(std::move(pts));
}

/// Write a PLY point cloud with double x,y,z properties. When labels are
/// given (one 0/1 entry per point) a `change: uchar` vertex property is added.
/// 2-D clouds are written with z = 0. ASCII output uses %.17g so a save/load
/// round trip reproduces every double exactly.
inline void save_ply(const PointCloud& cloud, const std::vector<std::uint8_t>* labels,
                     const std::string& path,
                     PlyFormat format = PlyFormat::binary_little_endian) {
  if (labels && labels->size() != cloud.size())
    throw Error("save_ply: label count does not match point count");
  if (cloud.dim() != 2 && cloud.dim() != 3) throw Error("save_ply: cloud dim must be 2 or 3");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_ply: cannot open '" + path + "' for writing");

  out << "ply\n";
  out << "format "
      << (format == PlyFormat::ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (labels) out << "property uchar change\n";
  out << "end_header\n";

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double xyz[3] = {cloud.points(static_cast<Eigen::Index>(i), 0),
                     cloud.points(static_cast<Eigen::Index>(i), 1),
                     cloud.dim() == 3 ? cloud.points(static_cast<Eigen::Index>(i), 2) : 0.0};
    if (format == PlyFormat::ascii) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", xyz[0], xyz[1], xyz[2]);
      out << buf;
      if (labels) out << ' ' << static_cast<int>((*labels)[i] ? 1 : 0);
      out << '\n';
    } else {
      out.write(reinterpret_cast<const char*>(xyz), 24);
      if (labels) {
        const std::uint8_t flag = (*labels)[i] ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&flag), 1);
      }
    }
  }
  if (!out) throw Error("save_ply: write to '" + path + "' failed");
}

inline void save_ply(const PointCloud& cloud, const std::string& path,
                     PlyFormat format = PlyFormat::binary_little_endian) {
  save_ply(cloud, nullptr, path, format);
}

/// Read back the `change` property written by save_ply; entries default to 0
/// when the file carries no labels.
inline std::vector<std::uint8_t> load_ply_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_ply_labels: cannot open '" + path + "'");
  std::string line;
  bool binary = false;
  std::size_t count = 0;
  std::vector<std::string> types;
  int change_col = -1;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary = fmt != "ascii";
    } else if (word == "element") {
      std::string name;
      std::size_t n;
      ls >> name >> n;
      in_vertex = name == "vertex";
      if (in_vertex) count = n;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      types.push_back(type);
      if (name == "change") change_col = static_cast<int>(types.size()) - 1;
    } else if (word == "end_header") {
      break;
    }
  }
  std::vector<std::uint8_t> labels(count, 0);
  if (change_col < 0) return labels;
  for (std::size_t i = 0; i < count; ++i) {
    if (binary) {
      for (std::size_t p = 0; p < types.size(); ++p) {
        const double v = detail::read_binary_scalar(in, types[p]);
        if (static_cast<int>(p) == change_col) labels[i] = v != 0.0 ? 1 : 0;
      }
    } else {
      if (!std::getline(in, line)) throw Error("load_ply_labels: truncated data");
      std::istringstream ls(line);
      double v = 0;
      for (int p = 0; p <= change_col; ++p) ls >> v;
      labels[i] = v != 0.0 ? 1 : 0;
    }
  }
  return labels;
}

}  // namespace gmmcd
