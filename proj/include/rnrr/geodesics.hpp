#pragma once

// On-surface geodesic distances.
//
// Triangle meshes use first-order fast marching with the planar-unfolding
// triangle update; surfaces that only carry edges use Dijkstra on the edge
// graph; bare point clouds use Dijkstra on a symmetrized 8-NN graph.
// Vertices that are never reached (other components, or beyond the cap)
// report +infinity.

#include "rnrr/common.hpp"
#include "rnrr/geometry_io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace rnrr {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct GeodesicField {
  int source_vertex = -1;
  std::vector<double> distances;
  std::optional<double> capped_at;
};

enum class GeodesicMethod { fast_marching, edge_dijkstra, knn_dijkstra };

namespace detail {

/// Distance at c given exact-ish distances at a and b of triangle (a, b, c).
/// Unfolds a virtual source into the plane of the triangle; falls back to
/// the edge paths when the straight ray would not cross segment ab or the
/// update would not be causal (below max(da, db)).
inline double triangle_update(const Vec3& xa, double da, const Vec3& xb, double db, const Vec3& xc) {
  const double lac = (xc - xa).norm();
  const double lbc = (xc - xb).norm();
  const double fallback = std::min(da + lac, db + lbc);
  const Vec3 ab = xb - xa;
  const double c = ab.norm();
  if (!(c > 0.0)) return fallback;
  const Vec3 ex = ab / c;
  const Vec3 ac = xc - xa;
  const double cx = ac.dot(ex);
  const double cy2 = ac.squaredNorm() - cx * cx;
  if (!(cy2 > 0.0)) return fallback;
  const double cy = std::sqrt(cy2);

  const double sx = (da * da - db * db + c * c) / (2.0 * c);
  const double sy2 = da * da - sx * sx;
  if (!(sy2 >= 0.0)) return fallback;
  const double sy = -std::sqrt(sy2);

  // Intersection of segment S->C with the line y = 0.
  const double t = -sy / (cy - sy);
  const double ix = sx + t * (cx - sx);
  if (ix < 0.0 || ix > c) return fallback;
  const double d = std::hypot(cx - sx, cy - sy);
  if (d < std::max(da, db)) return fallback;
  return std::min(d, fallback);
}

}  // namespace detail

/// Precomputed adjacency for repeated geodesic queries on one surface.
class GeodesicEngine {
 public:
  explicit GeodesicEngine(const Surface& s) : vertices_(s.vertices) {
    const int n = static_cast<int>(vertices_.size());
    if (s.has_faces()) {
      method_ = GeodesicMethod::fast_marching;
      faces_ = s.faces;
      vertex_faces_.assign(n, {});
      for (int f = 0; f < static_cast<int>(faces_.size()); ++f)
        for (int v : faces_[f]) vertex_faces_[v].push_back(f);
      build_adjacency(s.edges.empty() ? derive_edges(faces_) : s.edges);
    } else if (!s.edges.empty()) {
      method_ = GeodesicMethod::edge_dijkstra;
      build_adjacency(s.edges);
    } else {
      if (n < 2) throw DegenerateInput("geodesics: point cloud needs at least two points");
      method_ = GeodesicMethod::knn_dijkstra;
      build_adjacency(knn_graph_edges(vertices_, 8));
    }
  }

  GeodesicMethod method() const { return method_; }
  std::size_t size() const { return vertices_.size(); }

  /// Single-source field. With a cap, propagation stops once the front
  /// passes the cap and everything beyond is +infinity.
  GeodesicField from(int seed, std::optional<double> cap = std::nullopt) const {
    check_seed(seed);
    GeodesicField field{seed, {}, cap};
    if (method_ == GeodesicMethod::fast_marching) field.distances = march(seed, cap);
    else field.distances = dijkstra(seed, cap);
    return field;
  }

  /// Dijkstra along the edge graph even when faces exist.
  std::vector<double> edge_path_distances(int seed, std::optional<double> cap = std::nullopt) const {
    check_seed(seed);
    return dijkstra(seed, cap);
  }

 private:
  using Item = std::pair<double, int>;
  using MinHeap = std::priority_queue<Item, std::vector<Item>, std::greater<>>;

  void check_seed(int seed) const {
    if (seed < 0 || seed >= static_cast<int>(vertices_.size())) throw InvalidInput("geodesics: seed out of range");
  }

  void build_adjacency(const std::vector<Edge>& edges) {
    adjacency_.assign(vertices_.size(), {});
    for (const Edge& e : edges) {
      const double len = (vertices_[e[0]] - vertices_[e[1]]).norm();
      adjacency_[e[0]].push_back({e[1], len});
      adjacency_[e[1]].push_back({e[0], len});
    }
  }

  std::vector<double> dijkstra(int seed, std::optional<double> cap) const {
    const int n = static_cast<int>(vertices_.size());
    std::vector<double> dist(n, kInfinity);
    std::vector<char> done(n, 0);
    MinHeap heap;
    dist[seed] = 0.0;
    heap.emplace(0.0, seed);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (done[u]) continue;
      if (cap && d > *cap) break;
      done[u] = 1;
      for (const auto& [w, len] : adjacency_[u]) {
        if (done[w]) continue;
        const double nd = d + len;
        if (nd < dist[w]) {
          dist[w] = nd;
          heap.emplace(nd, w);
        }
      }
    }
    for (int i = 0; i < n; ++i)
      if (!done[i]) dist[i] = kInfinity;
    return dist;
  }

  std::vector<double> march(int seed, std::optional<double> cap) const {
    const int n = static_cast<int>(vertices_.size());
    std::vector<double> dist(n, kInfinity);
    std::vector<char> done(n, 0);
    MinHeap heap;
    dist[seed] = 0.0;
    heap.emplace(0.0, seed);
    auto relax = [&](int v, double cand) {
      if (cand < dist[v]) {
        dist[v] = cand;
        heap.emplace(cand, v);
      }
    };
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (done[u] || d > dist[u]) continue;
      if (cap && d > *cap) break;
      done[u] = 1;
      // Edges not covered by any face (non-manifold leftovers) still propagate.
      for (const auto& [w, len] : adjacency_[u])
        if (!done[w]) relax(w, d + len);
      for (int f : vertex_faces_[u]) {
        const Face& tri = faces_[f];
        int k = 0;
        while (tri[k] != u) ++k;
        const int b = tri[(k + 1) % 3];
        const int c = tri[(k + 2) % 3];
        if (!done[c] && done[b]) relax(c, detail::triangle_update(vertices_[u], d, vertices_[b], dist[b], vertices_[c]));
        if (!done[b] && done[c]) relax(b, detail::triangle_update(vertices_[u], d, vertices_[c], dist[c], vertices_[b]));
      }
    }
    for (int i = 0; i < n; ++i)
      if (!done[i]) dist[i] = kInfinity;
    return dist;
  }

  Points vertices_;
  std::vector<Face> faces_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<std::vector<std::pair<int, double>>> adjacency_;
  GeodesicMethod method_ = GeodesicMethod::fast_marching;
};

inline GeodesicField geodesic_from(const Surface& s, int seed, std::optional<double> cap = std::nullopt) {
  return GeodesicEngine(s).from(seed, cap);
}

/// Running pointwise minimum over single-source fields. Adding a seed only
/// overwrites entries whose distance shrinks.
class MultiSourceGeodesic {
 public:
  MultiSourceGeodesic(const GeodesicEngine& engine, std::optional<double> cap)
      : engine_(&engine), cap_(cap), distances_(engine.size(), kInfinity) {}

  void add_seed(int seed) {
    const GeodesicField f = engine_->from(seed, cap_);
    for (std::size_t i = 0; i < distances_.size(); ++i)
      if (f.distances[i] < distances_[i]) distances_[i] = f.distances[i];
    seeds_.push_back(seed);
  }

  const std::vector<double>& distances() const { return distances_; }
  const std::vector<int>& seeds() const { return seeds_; }

 private:
  const GeodesicEngine* engine_;
  std::optional<double> cap_;
  std::vector<double> distances_;
  std::vector<int> seeds_;
};

inline std::vector<double> multi_source_geodesic(const Surface& s, std::span<const int> seeds,
                                                 std::optional<double> cap = std::nullopt) {
  if (seeds.empty()) throw InvalidInput("multi_source_geodesic: no seeds");
  const GeodesicEngine engine(s);
  MultiSourceGeodesic acc(engine, cap);
  for (int seed : seeds) acc.add_seed(seed);
  return acc.distances();
}

}  // namespace rnrr
