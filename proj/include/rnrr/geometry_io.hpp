#pragma once

// Surfaces and point sets: loading, writing, normalization and normals.

#include "rnrr/common.hpp"
#include "rnrr/kdtree.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace rnrr {

using Face = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Vertex positions plus optional connectivity and per-vertex unit normals.
struct Surface {
  Points vertices;
  std::vector<Face> faces;
  std::vector<Edge> edges;  // undirected, (lo, hi), sorted, unique
  Points normals;           // empty or one per vertex

  std::size_t size() const { return vertices.size(); }
  bool has_faces() const { return !faces.empty(); }
  bool has_normals() const { return !normals.empty() && normals.size() == vertices.size(); }
};

enum class MeshFormat { obj, ply };

/// Unique undirected edges of a triangle list, sorted lexicographically.
inline std::vector<Edge> derive_edges(std::span<const Face> faces) {
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3);
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      edges.push_back({a, b});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Symmetrized k-nearest-neighbour graph over a point set (self excluded).
inline std::vector<Edge> knn_graph_edges(std::span<const Vec3> points, int k) {
  std::vector<Edge> edges;
  if (points.size() < 2) return edges;
  const KdTree tree(points);
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    for (const Neighbor& nb : tree.knn(points[i], k + 1)) {
      if (nb.index == i) continue;
      edges.push_back({std::min(i, nb.index), std::max(i, nb.index)});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Edges used for metric purposes: mesh edges when present, else an 8-NN graph.
inline std::vector<Edge> metric_edges(const Surface& s) {
  if (!s.edges.empty()) return s.edges;
  return knn_graph_edges(s.vertices, 8);
}

/// Mean edge length (l-bar). Point clouds use the 8-NN graph edges.
inline double mean_edge_length(const Surface& s) {
  const std::vector<Edge> edges = metric_edges(s);
  if (edges.empty()) throw DegenerateInput("mean edge length needs at least two points");
  double sum = 0.0;
  for (const Edge& e : edges) sum += (s.vertices[e[0]] - s.vertices[e[1]]).norm();
  return sum / static_cast<double>(edges.size());
}

/// Checks index ranges, edge uniqueness and normal length.
inline void validate(const Surface& s) {
  const int n = static_cast<int>(s.vertices.size());
  for (const Face& f : s.faces)
    for (int v : f)
      if (v < 0 || v >= n) throw InvalidInput("face index out of range");
  for (std::size_t i = 0; i < s.edges.size(); ++i) {
    const Edge& e = s.edges[i];
    if (e[0] < 0 || e[1] >= n || e[0] >= e[1]) throw InvalidInput("malformed edge");
    if (i > 0 && s.edges[i - 1] >= e) throw InvalidInput("edges not sorted/unique");
  }
  if (!s.normals.empty()) {
    if (s.normals.size() != s.vertices.size()) throw InvalidInput("normal count mismatch");
    for (const Vec3& nv : s.normals)
      if (std::abs(nv.norm() - 1.0) > 1e-6) throw InvalidInput("normal is not unit length");
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void append_fan(std::vector<Face>& faces, std::span<const int> poly) {
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back({poly[0], poly[k], poly[k + 1]});
}

inline void finalize_loaded(Surface& s) {
  if (s.vertices.empty()) throw InvalidInput("surface has no vertices");
  s.edges = derive_edges(s.faces);
  if (!s.normals.empty()) {
    bool ok = s.normals.size() == s.vertices.size();
    for (Vec3& nv : s.normals) {
      const double len = nv.norm();
      if (!(len > 0.0) || !std::isfinite(len)) {
        ok = false;
        break;
      }
      nv /= len;
    }
    if (!ok) s.normals.clear();
  }
}

inline Surface parse_obj(std::istream& in) {
  Surface s;
  struct PendingFace {
    std::vector<int> idx;
    std::size_t line;
  };
  std::vector<PendingFace> pending;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto tok = split_ws(line);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw FormatError("vertex needs three coordinates", line_no);
      Vec3 p;
      for (int k = 0; k < 3; ++k)
        if (!parse_number(tok[k + 1], p[k])) throw FormatError("bad vertex coordinate", line_no);
      s.vertices.push_back(p);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw FormatError("face needs at least three vertices", line_no);
      PendingFace pf{{}, line_no};
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view head = tok[k].substr(0, tok[k].find('/'));
        long idx = 0;
        if (!parse_number(head, idx)) throw FormatError("bad face index", line_no);
        if (idx == 0) throw FormatError("face index 0 is invalid (indices are 1-based)", line_no);
        const long resolved = idx > 0 ? idx - 1 : static_cast<long>(s.vertices.size()) + idx;
        pf.idx.push_back(static_cast<int>(resolved));
      }
      pending.push_back(std::move(pf));
    }
    // vn, vt, o, g, s, usemtl, mtllib: ignored
  }
  const long n = static_cast<long>(s.vertices.size());
  for (const PendingFace& pf : pending) {
    for (int v : pf.idx)
      if (v < 0 || v >= n) throw FormatError("face index out of range", pf.line);
    append_fan(s.faces, pf.idx);
  }
  finalize_loaded(s);
  return s;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::optional<PlyType> ply_type(std::string_view t) {
  if (t == "char" || t == "int8") return PlyType::i8;
  if (t == "uchar" || t == "uint8") return PlyType::u8;
  if (t == "short" || t == "int16") return PlyType::i16;
  if (t == "ushort" || t == "uint16") return PlyType::u16;
  if (t == "int" || t == "int32") return PlyType::i32;
  if (t == "uint" || t == "uint32") return PlyType::u32;
  if (t == "float" || t == "float32") return PlyType::f32;
  if (t == "double" || t == "float64") return PlyType::f64;
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

template <typename T>
T read_le(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

inline double read_binary(std::istream& in, PlyType t) {
  switch (t) {
    case PlyType::i8: return read_le<std::int8_t>(in);
    case PlyType::u8: return read_le<std::uint8_t>(in);
    case PlyType::i16: return read_le<std::int16_t>(in);
    case PlyType::u16: return read_le<std::uint16_t>(in);
    case PlyType::i32: return read_le<std::int32_t>(in);
    case PlyType::u32: return read_le<std::uint32_t>(in);
    case PlyType::f32: return read_le<float>(in);
    case PlyType::f64: return read_le<double>(in);
  }
  return 0.0;
}

inline Surface parse_ply(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (!std::getline(in, raw)) throw FormatError("unexpected end of PLY header", line_no + 1);
    ++line_no;
    return trim(raw);
  };
  if (next_line() != "ply") throw FormatError("missing 'ply' magic", line_no);

  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string_view line = next_line();
    if (line.empty()) continue;
    const auto tok = split_ws(line);
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw FormatError("bad format line", line_no);
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw FormatError("unsupported PLY format '" + std::string(tok[1]) + "'", line_no);
    } else if (tok[0] == "element") {
      std::size_t count = 0;
      if (tok.size() < 3 || !parse_number(tok[2], count)) throw FormatError("bad element line", line_no);
      elements.push_back({std::string(tok[1]), count, {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw FormatError("property before element", line_no);
      PlyProperty p;
      if (tok.size() >= 5 && tok[1] == "list") {
        auto ct = ply_type(tok[2]);
        auto it = ply_type(tok[3]);
        if (!ct || !it) throw FormatError("unknown list property type", line_no);
        p = {std::string(tok[4]), *it, true, *ct};
      } else if (tok.size() >= 3) {
        auto t = ply_type(tok[1]);
        if (!t) throw FormatError("unknown property type '" + std::string(tok[1]) + "'", line_no);
        p = {std::string(tok[2]), *t, false, PlyType::u8};
      } else {
        throw FormatError("bad property line", line_no);
      }
      elements.back().props.push_back(p);
    } else {
      throw FormatError("unexpected header keyword '" + std::string(tok[0]) + "'", line_no);
    }
  }

  Surface s;
  bool have_normals = false;
  for (const PlyElement& el : elements) {
    if (el.name != "vertex") continue;
    int found = 0;
    for (const PlyProperty& p : el.props)
      if (p.name == "nx" || p.name == "ny" || p.name == "nz") ++found;
    have_normals = found == 3;
  }

  std::vector<double> values;
  std::vector<std::vector<double>> lists;
  for (const PlyElement& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    for (std::size_t r = 0; r < el.count; ++r) {
      values.assign(el.props.size(), 0.0);
      lists.assign(el.props.size(), {});
      if (binary) {
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const PlyProperty& p = el.props[k];
          if (p.is_list) {
            const double cnt = read_binary(in, p.count_type);
            for (int c = 0; c < static_cast<int>(cnt); ++c) lists[k].push_back(read_binary(in, p.type));
          } else {
            values[k] = read_binary(in, p.type);
          }
        }
        if (!in) throw FormatError("truncated binary PLY body in element '" + el.name + "'", line_no + 1);
      } else {
        std::string_view line;
        do {
          line = next_line();
        } while (line.empty());
        const auto tok = split_ws(line);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const PlyProperty& p = el.props[k];
          auto take = [&]() {
            double v = 0.0;
            if (pos >= tok.size() || !parse_number(tok[pos], v))
              throw FormatError("bad value in element '" + el.name + "'", line_no);
            ++pos;
            return v;
          };
          if (p.is_list) {
            const int cnt = static_cast<int>(take());
            for (int c = 0; c < cnt; ++c) lists[k].push_back(take());
          } else {
            values[k] = take();
          }
        }
      }
      if (is_vertex) {
        Vec3 pnt = Vec3::Zero(), nrm = Vec3::Zero();
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const std::string& nm = el.props[k].name;
          if (nm == "x") pnt.x() = values[k];
          else if (nm == "y") pnt.y() = values[k];
          else if (nm == "z") pnt.z() = values[k];
          else if (nm == "nx") nrm.x() = values[k];
          else if (nm == "ny") nrm.y() = values[k];
          else if (nm == "nz") nrm.z() = values[k];
        }
        s.vertices.push_back(pnt);
        if (have_normals) s.normals.push_back(nrm);
      } else if (is_face) {
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          if (!el.props[k].is_list) continue;
          if (el.props[k].name != "vertex_indices" && el.props[k].name != "vertex_index") continue;
          std::vector<int> poly;
          for (double v : lists[k]) poly.push_back(static_cast<int>(v));
          if (poly.size() < 3) throw FormatError("face with fewer than three vertices", line_no);
          for (int v : poly)
            if (v < 0 || static_cast<std::size_t>(v) >= s.vertices.size())
              throw FormatError("face index out of range", line_no);
          append_fan(s.faces, poly);
        }
      }
    }
  }
  finalize_loaded(s);
  return s;
}

}  // namespace detail

inline MeshFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return MeshFormat::obj;
  if (ext == ".ply") return MeshFormat::ply;
  throw InvalidInput("cannot infer mesh format from '" + path.string() + "'");
}

inline Surface load_surface(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return format == MeshFormat::obj ? detail::parse_obj(in) : detail::parse_ply(in);
}

inline Surface load_surface(const std::filesystem::path& path) {
  return load_surface(path, format_from_path(path));
}

using Rgb = std::array<std::uint8_t, 3>;

/// Writes an ASCII PLY; doubles are printed in shortest round-trip form.
inline void write_ply(const Surface& s, const std::filesystem::path& path, std::span<const Rgb> colors = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const bool normals = s.has_normals();
  const bool rgb = !colors.empty();
  if (rgb && colors.size() != s.vertices.size()) throw InvalidInput("color count mismatch");
  out << "ply\nformat ascii 1.0\nelement vertex " << s.vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (rgb) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << s.faces.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < s.vertices.size(); ++i) {
    const Vec3& p = s.vertices[i];
    out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z());
    if (normals) {
      const Vec3& nv = s.normals[i];
      out << ' ' << detail::format_double(nv.x()) << ' ' << detail::format_double(nv.y()) << ' '
          << detail::format_double(nv.z());
    }
    if (rgb) out << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' ' << int(colors[i][2]);
    out << '\n';
  }
  for (const Face& f : s.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_obj(const Surface& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const Vec3& p : s.vertices)
    out << "v " << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
  for (const Face& f : s.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_surface(const Surface& s, const std::filesystem::path& path) {
  if (format_from_path(path) == MeshFormat::obj) write_obj(s, path);
  else write_ply(s, path);
}

/// Centroid shifts and the common scale applied by normalize_pair.
struct NormalizationRecord {
  Vec3 centroid_shift_source = Vec3::Zero();
  Vec3 centroid_shift_target = Vec3::Zero();
  double scale = 1.0;

  Vec3 normalize_source(const Vec3& p) const { return (p - centroid_shift_source) * scale; }
  Vec3 normalize_target(const Vec3& p) const { return (p - centroid_shift_target) * scale; }
  Vec3 denormalize_source(const Vec3& p) const { return p / scale + centroid_shift_source; }
  Vec3 denormalize_target(const Vec3& p) const { return p / scale + centroid_shift_target; }
  double denormalize_length(double d) const { return d / scale; }
};

inline Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

struct NormalizedPair {
  Surface source;
  Surface target;
  NormalizationRecord record;
};

/// Centers both surfaces and scales them by one factor so the combined
/// bounding box of the centered sets has unit diagonal.
inline NormalizedPair normalize_pair(const Surface& source, const Surface& target) {
  if (source.vertices.empty() || target.vertices.empty()) throw InvalidInput("normalize_pair: empty surface");
  NormalizationRecord rec;
  rec.centroid_shift_source = centroid(source.vertices);
  rec.centroid_shift_target = centroid(target.vertices);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : source.vertices) {
    lo = lo.cwiseMin(p - rec.centroid_shift_source);
    hi = hi.cwiseMax(p - rec.centroid_shift_source);
  }
  for (const Vec3& p : target.vertices) {
    lo = lo.cwiseMin(p - rec.centroid_shift_target);
    hi = hi.cwiseMax(p - rec.centroid_shift_target);
  }
  const double diag = (hi - lo).norm();
  if (!(diag > 0.0)) throw DegenerateInput("normalize_pair: all points coincide");
  rec.scale = 1.0 / diag;

  NormalizedPair out{source, target, rec};
  for (Vec3& p : out.source.vertices) p = rec.normalize_source(p);
  for (Vec3& p : out.target.vertices) p = rec.normalize_target(p);
  return out;
}

namespace detail {

inline Vec3 pca_normal(std::span<const Vec3> pts, std::span<const Neighbor> nbrs) {
  Vec3 c = Vec3::Zero();
  for (const Neighbor& nb : nbrs) c += pts[nb.index];
  c /= static_cast<double>(nbrs.size());
  Mat3 cov = Mat3::Zero();
  for (const Neighbor& nb : nbrs) {
    const Vec3 d = pts[nb.index] - c;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Vec3 nv = es.eigenvectors().col(0);  // smallest eigenvalue
  return nv.normalized();
}

}  // namespace detail

/// Per-vertex unit normals.
///
/// Meshes: incident face normals summed with corner-angle weights.
/// Point clouds: PCA over the 10 nearest neighbours, oriented consistently by
/// propagating along a minimum spanning tree of the neighbour graph (edge
/// cost 1 - |n_i . n_j|), seeded at the highest point of each component with
/// its normal facing +z.
inline Surface compute_normals(const Surface& s) {
  Surface out = s;
  const int n = static_cast<int>(s.vertices.size());
  out.normals.assign(n, Vec3::Zero());

  if (s.has_faces()) {
    for (const Face& f : s.faces) {
      const Vec3& a = s.vertices[f[0]];
      const Vec3& b = s.vertices[f[1]];
      const Vec3& c = s.vertices[f[2]];
      const Vec3 fn = (b - a).cross(c - a);
      const double len = fn.norm();
      if (!(len > 0.0)) continue;
      const Vec3 unit = fn / len;
      for (int k = 0; k < 3; ++k) {
        const Vec3& p = s.vertices[f[k]];
        const Vec3 e1 = (s.vertices[f[(k + 1) % 3]] - p).normalized();
        const Vec3 e2 = (s.vertices[f[(k + 2) % 3]] - p).normalized();
        const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
        out.normals[f[k]] += angle * unit;
      }
    }
    std::vector<int> orphans;
    for (int i = 0; i < n; ++i) {
      const double len = out.normals[i].norm();
      if (len > 0.0) out.normals[i] /= len;
      else orphans.push_back(i);
    }
    if (!orphans.empty()) {
      if (n < 3) throw DegenerateInput("compute_normals: vertex without faces and too few points");
      const KdTree tree(s.vertices);
      for (int i : orphans) {
        const auto nbrs = tree.knn(s.vertices[i], 10);
        Vec3 nv = detail::pca_normal(s.vertices, nbrs);
        int axis = 0;
        nv.cwiseAbs().maxCoeff(&axis);
        if (nv[axis] < 0) nv = -nv;
        out.normals[i] = nv;
      }
    }
    return out;
  }

  if (n < 3) throw DegenerateInput("compute_normals: need at least 3 points without faces");
  const KdTree tree(s.vertices);
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    const auto nbrs = tree.knn(s.vertices[i], 10);
    out.normals[i] = detail::pca_normal(s.vertices, nbrs);
    for (const Neighbor& nb : nbrs) {
      if (nb.index == i) continue;
      adj[i].push_back(nb.index);
      adj[nb.index].push_back(i);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  // Prim's algorithm per component; flip each child to agree with its parent.
  std::vector<char> done(n, 0);
  std::vector<int> by_height(n);
  for (int i = 0; i < n; ++i) by_height[i] = i;
  std::stable_sort(by_height.begin(), by_height.end(),
                   [&](int a, int b) { return s.vertices[a].z() > s.vertices[b].z(); });
  using Item = std::tuple<double, int, int>;  // cost, vertex, parent
  for (int root : by_height) {
    if (done[root]) continue;
    if (out.normals[root].z() < 0) out.normals[root] = -out.normals[root];
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.emplace(0.0, root, -1);
    while (!pq.empty()) {
      auto [cost, v, parent] = pq.top();
      pq.pop();
      if (done[v]) continue;
      done[v] = 1;
      if (parent >= 0 && out.normals[v].dot(out.normals[parent]) < 0) out.normals[v] = -out.normals[v];
      for (int w : adj[v]) {
        if (done[w]) continue;
        pq.emplace(1.0 - std::abs(out.normals[v].dot(out.normals[w])), w, v);
      }
    }
  }
  return out;
}

/// Blue-to-red linear ramp over [0, max_error]: 0 -> (0,0,255), max -> (255,0,0).
inline Rgb error_color(double error, double max_error) {
  const double t = max_error > 0.0 ? std::clamp(error / max_error, 0.0, 1.0) : 0.0;
  const auto r = static_cast<std::uint8_t>(std::lround(255.0 * t));
  const auto b = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
  return {r, 0, b};
}

/// Writes the surface as PLY with per-vertex colors from error_color.
inline void write_error_mesh(const Surface& s, std::span<const double> errors, const std::filesystem::path& path) {
  if (errors.size() != s.vertices.size()) throw InvalidInput("write_error_mesh: one error per vertex required");
  double max_error = 0.0;
  for (double e : errors) max_error = std::max(max_error, e);
  std::vector<Rgb> colors;
  colors.reserve(errors.size());
  for (double e : errors) colors.push_back(error_color(e, max_error));
  write_ply(s, path, colors);
}

}  // namespace rnrr
