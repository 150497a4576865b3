#include "mpt/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mpt {
namespace {

struct Line {
  int number = 0;        // 1-based
  std::string_view text;  // without the trailing newline / carriage return
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  int number = 1;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    size_t end = (nl == std::string_view::npos) ? text.size() : nl;
    std::string_view body = text.substr(pos, end - pos);
    if (!body.empty() && body.back() == '\r') body.remove_suffix(1);
    lines.push_back({number, body});
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
    ++number;
  }
  // Drop a phantom final line produced by a trailing newline.
  if (!lines.empty() && lines.back().text.empty() && text.size() > 0 && text.back() == '\n')
    lines.pop_back();
  return lines;
}

bool is_space(char c) { return c == ' ' || c == '\t'; }

bool blank_or_comment(std::string_view s) {
  size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  return i == s.size() || s[i] == '#';
}

struct Token {
  std::string_view text;
  int col = 0;  // 1-based start column
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size()) break;
    size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    out.push_back({s.substr(start, i - start), int(start) + 1});
  }
  return out;
}

double parse_real(const Token& tok, int line) {
  double v = 0.0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ParseError(line, tok.col, "expected a number, got '" + std::string(tok.text) + "'");
  return v;
}

long parse_int(const Token& tok, int line) {
  long v = 0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ParseError(line, tok.col, "expected an integer, got '" + std::string(tok.text) + "'");
  return v;
}

std::string fmt_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

PointCloud parse_xyz(std::string_view text) {
  PointCloud cloud;
  for (const Line& line : split_lines(text)) {
    if (blank_or_comment(line.text)) continue;
    auto toks = tokenize(line.text);
    if (toks.size() < 3)
      throw ParseError(line.number, int(line.text.size()) + 1,
                       "expected 3 coordinates, got " + std::to_string(toks.size()));
    Point3 p;
    p.x = parse_real(toks[0], line.number);
    p.y = parse_real(toks[1], line.number);
    p.z = parse_real(toks[2], line.number);
    cloud.push_back(p);  // extra columns (normals, colors, ...) are ignored
  }
  return cloud;
}

std::string write_xyz(const PointCloud& cloud) {
  std::string out;
  for (const Point3& p : cloud) {
    out += fmt_g9(p.x);
    out += ' ';
    out += fmt_g9(p.y);
    out += ' ';
    out += fmt_g9(p.z);
    out += '\n';
  }
  return out;
}

namespace {

struct PlyProperty {
  std::string type;
  std::string name;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  long count = 0;
  int decl_line = 0;
  std::vector<PlyProperty> props;
};

bool scalar_real_type(const std::string& t) {
  return t == "float" || t == "float32" || t == "double" || t == "float64";
}

}  // namespace

PointCloud parse_ply_ascii(std::string_view text, std::vector<double>* quality_out) {
  auto lines = split_lines(text);
  size_t li = 0;
  auto next_line = [&]() -> const Line* { return li < lines.size() ? &lines[li++] : nullptr; };

  const Line* l = next_line();
  if (!l || tokenize(l->text).size() != 1 || tokenize(l->text)[0].text != "ply")
    throw ParseError(l ? l->number : 1, 1, "missing 'ply' magic line");

  bool have_format = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while ((l = next_line())) {
    auto toks = tokenize(l->text);
    if (toks.empty()) throw ParseError(l->number, 1, "blank line inside header");
    const std::string_view kw = toks[0].text;
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      if (toks.size() != 3 || toks[1].text != "ascii" || toks[2].text != "1.0")
        throw ParseError(l->number, toks.size() > 1 ? toks[1].col : toks[0].col,
                         "unsupported format, expected 'format ascii 1.0'");
      have_format = true;
    } else if (kw == "element") {
      if (toks.size() != 3) throw ParseError(l->number, toks[0].col, "malformed element declaration");
      PlyElement e;
      e.name = std::string(toks[1].text);
      e.count = parse_int(toks[2], l->number);
      if (e.count < 0) throw ParseError(l->number, toks[2].col, "negative element count");
      e.decl_line = l->number;
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError(l->number, toks[0].col, "property before any element");
      PlyProperty p;
      if (toks.size() == 3) {
        p.type = std::string(toks[1].text);
        p.name = std::string(toks[2].text);
      } else if (toks.size() == 5 && toks[1].text == "list") {
        p.is_list = true;
        p.name = std::string(toks[4].text);
      } else {
        throw ParseError(l->number, toks[0].col, "malformed property declaration");
      }
      elements.back().props.push_back(std::move(p));
    } else if (kw == "end_header") {
      header_done = true;
      break;
    } else {
      throw ParseError(l->number, toks[0].col, "unknown header keyword '" + std::string(kw) + "'");
    }
  }
  if (!header_done) throw ParseError(int(lines.size()), 1, "missing end_header");
  if (!have_format) throw ParseError(1, 1, "header lacks 'format ascii 1.0'");

  const PlyElement* vertex = nullptr;
  for (const auto& e : elements)
    if (e.name == "vertex") vertex = &e;
  if (!vertex) throw ParseError(1, 1, "no vertex element declared");

  int xi = -1, yi = -1, zi = -1, qi = -1;
  for (size_t i = 0; i < vertex->props.size(); ++i) {
    const PlyProperty& p = vertex->props[i];
    if (p.is_list) continue;
    if (p.name == "x") xi = int(i);
    if (p.name == "y") yi = int(i);
    if (p.name == "z") zi = int(i);
    if (p.name == "quality") qi = int(i);
    if ((p.name == "x" || p.name == "y" || p.name == "z") && !scalar_real_type(p.type))
      throw ParseError(vertex->decl_line, 1, "vertex coordinate property must be float or double");
  }
  if (xi < 0 || yi < 0 || zi < 0)
    throw ParseError(vertex->decl_line, 1, "vertex element lacks x, y, z properties");

  PointCloud cloud;
  if (quality_out) quality_out->clear();
  for (const PlyElement& e : elements) {
    for (long row = 0; row < e.count; ++row) {
      l = next_line();
      if (!l)
        throw ParseError(int(lines.size()) + 1, 1,
                         "unexpected end of file: element '" + e.name + "' declares " +
                             std::to_string(e.count) + " rows, got " + std::to_string(row));
      if (&e != vertex) continue;  // rows of other elements are not interpreted
      auto toks = tokenize(l->text);
      if (toks.size() != e.props.size())
        throw ParseError(l->number, toks.empty() ? 1 : toks[0].col,
                         "expected " + std::to_string(e.props.size()) + " fields, got " +
                             std::to_string(toks.size()));
      Point3 p;
      p.x = parse_real(toks[size_t(xi)], l->number);
      p.y = parse_real(toks[size_t(yi)], l->number);
      p.z = parse_real(toks[size_t(zi)], l->number);
      cloud.push_back(p);
      if (quality_out && qi >= 0) quality_out->push_back(parse_real(toks[size_t(qi)], l->number));
    }
  }
  while ((l = next_line())) {
    if (!blank_or_comment(l->text))
      throw ParseError(l->number, tokenize(l->text)[0].col, "trailing content after declared elements");
  }
  return cloud;
}

PointCloud parse_ply_ascii(std::string_view text) { return parse_ply_ascii(text, nullptr); }

std::string write_ply_ascii(const PointCloud& cloud, const std::vector<double>* quality) {
  if (quality && quality->size() != cloud.size())
    throw std::invalid_argument("write_ply_ascii: quality size mismatch");
  std::string out;
  out += "ply\n";
  out += "format ascii 1.0\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property float x\n";
  out += "property float y\n";
  out += "property float z\n";
  if (quality) out += "property float quality\n";
  out += "end_header\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    out += fmt_g9(cloud[i].x);
    out += ' ';
    out += fmt_g9(cloud[i].y);
    out += ' ';
    out += fmt_g9(cloud[i].z);
    if (quality) {
      out += ' ';
      out += fmt_g9((*quality)[i]);
    }
    out += '\n';
  }
  return out;
}

PointCloud parse_off(std::string_view text) {
  auto lines = split_lines(text);
  size_t li = 0;
  auto next_significant = [&]() -> const Line* {
    while (li < lines.size()) {
      const Line* l = &lines[li++];
      if (!blank_or_comment(l->text)) return l;
    }
    return nullptr;
  };

  const Line* l = next_significant();
  if (!l) throw ParseError(1, 1, "empty OFF file");
  auto toks = tokenize(l->text);
  if (toks[0].text != "OFF") throw ParseError(l->number, toks[0].col, "missing OFF header");

  long nv = 0, nf = 0;
  std::vector<Token> counts;
  if (toks.size() > 1) {
    counts.assign(toks.begin() + 1, toks.end());
  } else {
    const Line* cl = next_significant();
    if (!cl) throw ParseError(l->number + 1, 1, "missing counts line");
    counts = tokenize(cl->text);
    l = cl;
  }
  if (counts.size() != 3)
    throw ParseError(l->number, counts.empty() ? 1 : counts[0].col,
                     "expected 'nv nf ne' counts, got " + std::to_string(counts.size()) + " fields");
  nv = parse_int(counts[0], l->number);
  nf = parse_int(counts[1], l->number);
  parse_int(counts[2], l->number);
  if (nv < 0 || nf < 0) throw ParseError(l->number, counts[0].col, "negative count");

  PointCloud cloud;
  cloud.reserve(size_t(nv));
  for (long i = 0; i < nv; ++i) {
    const Line* vl = next_significant();
    if (!vl)
      throw ParseError(int(lines.size()) + 1, 1,
                       "unexpected end of file: expected " + std::to_string(nv) + " vertices, got " +
                           std::to_string(i));
    auto vt = tokenize(vl->text);
    if (vt.size() < 3)
      throw ParseError(vl->number, int(vl->text.size()) + 1, "expected 3 coordinates");
    Point3 p;
    p.x = parse_real(vt[0], vl->number);
    p.y = parse_real(vt[1], vl->number);
    p.z = parse_real(vt[2], vl->number);
    cloud.push_back(p);
  }
  for (long i = 0; i < nf; ++i) {
    const Line* fl = next_significant();
    if (!fl)
      throw ParseError(int(lines.size()) + 1, 1,
                       "unexpected end of file: expected " + std::to_string(nf) + " faces, got " +
                           std::to_string(i));
    // faces are discarded
  }
  if (const Line* extra = next_significant())
    throw ParseError(extra->number, tokenize(extra->text)[0].col, "trailing content after declared counts");
  return cloud;
}

PointCloud load_cloud_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (ext == "xyz") return parse_xyz(text);
  if (ext == "ply") return parse_ply_ascii(text);
  if (ext == "off") return parse_off(text);
  throw std::invalid_argument("unsupported cloud format '" + ext + "' for '" + path + "' (use .xyz, .ply or .off)");
}

}  // namespace mpt
