#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mpt/geometry.hpp"

namespace mpt {

// 1-based location of a parse failure.
struct ParseDiagnostic {
  int line = 1;
  int col = 1;
  std::string message;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int col, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + message),
        diag{line, col, message} {}
  ParseDiagnostic diag;
};

// XYZ: one point per line, at least three whitespace-separated reals, extra
// columns ignored. Empty lines and lines whose first non-space character is
// '#' are skipped.
PointCloud parse_xyz(std::string_view text);
std::string write_xyz(const PointCloud& cloud);

// ASCII PLY. Parsing requires "format ascii 1.0" and a vertex element with
// float x,y,z properties; extra vertex properties are ignored by position
// and non-vertex elements are consumed without interpretation. Reads exactly
// the declared number of rows per element and reports anything after the
// last one. Writing emits x,y,z (plus an optional per-point "quality"
// scalar) with 9-significant-digit formatting; write/parse/write of a valid
// file is byte-stable.
PointCloud parse_ply_ascii(std::string_view text);
PointCloud parse_ply_ascii(std::string_view text, std::vector<double>* quality_out);
std::string write_ply_ascii(const PointCloud& cloud, const std::vector<double>* quality = nullptr);

// OFF: "OFF" header (counts may share the header line), a "nv nf ne" counts
// line, nv vertex lines. Faces are read past and discarded; '#' comment
// lines are skipped anywhere.
PointCloud parse_off(std::string_view text);

// Dispatch on file extension (.xyz, .ply, .off) and parse the file contents.
PointCloud load_cloud_file(const std::string& path);

}  // namespace mpt
