#pragma once

// Embedded deformation graph: node sampling, node edges and per-point
// influence weights, plus the blended point transform built on them.

#include "rnrr/common.hpp"
#include "rnrr/geodesics.hpp"
#include "rnrr/geometry_io.hpp"
#include "rnrr/transform_state.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace rnrr {

enum class Sampler { pca, farthest };

struct GraphNode {
  int source_index = -1;
  Vec3 position = Vec3::Zero();
};

struct InfluenceWeight {
  int node = -1;
  double weight = 0.0;
};

struct DeformationGraph {
  std::vector<GraphNode> nodes;
  std::vector<Edge> node_edges;  // undirected, (lo, hi)
  double radius = 0.0;           // influence radius R
  double edge_radius = 0.0;      // nodes closer than this are connected
  std::vector<std::vector<InfluenceWeight>> influence;  // per source point, sorted by node
  std::vector<int> uncovered;  // points that had no node within R (nearest-node fallback)

  int node_count() const { return static_cast<int>(nodes.size()); }
  int edge_count() const { return static_cast<int>(node_edges.size()); }
  int point_count() const { return static_cast<int>(influence.size()); }
};

/// Unit eigenvector of the largest covariance eigenvalue, signed so that its
/// largest-magnitude component is positive.
inline Vec3 principal_axis(std::span<const Vec3> points) {
  const Vec3 c = centroid(points);
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Vec3 axis = es.eigenvectors().col(2);
  int k = 0;
  axis.cwiseAbs().maxCoeff(&k);
  if (axis[k] < 0) axis = -axis;
  return axis;
}

/// Scan points along the principal axis (stable on ties) and keep a point
/// when its geodesic distance to every kept point is at least R.
inline std::vector<int> sample_nodes_pca(const Surface& s, const GeodesicEngine& engine, double radius) {
  if (!(radius > 0.0)) throw InvalidParameter("sampling radius must be positive");
  const int n = static_cast<int>(s.vertices.size());
  const Vec3 axis = principal_axis(s.vertices);
  std::vector<double> proj(n);
  for (int i = 0; i < n; ++i) proj[i] = s.vertices[i].dot(axis);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return proj[a] < proj[b]; });

  MultiSourceGeodesic covered(engine, radius);
  std::vector<int> nodes;
  for (int i : order) {
    if (nodes.empty() || covered.distances()[i] >= radius) {
      nodes.push_back(i);
      covered.add_seed(i);
    }
  }
  return nodes;
}

inline std::vector<int> sample_nodes_pca(const Surface& s, double radius) {
  return sample_nodes_pca(s, GeodesicEngine(s), radius);
}

/// Farthest-point sampling from index 0; stops once the farthest remaining
/// point is closer than R to the node set. Ties go to the lowest index.
inline std::vector<int> sample_nodes_farthest(const Surface& s, const GeodesicEngine& engine, double radius) {
  if (!(radius > 0.0)) throw InvalidParameter("sampling radius must be positive");
  MultiSourceGeodesic covered(engine, std::nullopt);
  std::vector<int> nodes{0};
  covered.add_seed(0);
  for (;;) {
    const auto& d = covered.distances();
    int best = -1;
    for (int i = 0; i < static_cast<int>(d.size()); ++i)
      if (best < 0 || d[i] > d[best]) best = i;
    if (!(d[best] >= radius)) break;
    nodes.push_back(best);
    covered.add_seed(best);
  }
  return nodes;
}

inline std::vector<int> sample_nodes_farthest(const Surface& s, double radius) {
  return sample_nodes_farthest(s, GeodesicEngine(s), radius);
}

/// Unnormalized influence of a node at geodesic distance d: (1 - d^2/R^2)^3.
inline double influence_kernel(double d, double radius) {
  const double q = 1.0 - (d * d) / (radius * radius);
  return q * q * q;
}

/// Builds the deformation graph over the source surface.
///
/// Influence sets use D < R with the cubic falloff, normalized per point.
/// Nodes are connected when their geodesic distance is below
/// edge_radius_factor * R; sampled nodes are at least R apart, so a factor
/// above 1 is required for the graph to have edges at all.
inline DeformationGraph build_graph(const Surface& s, double radius, Sampler sampler = Sampler::pca,
                                    double edge_radius_factor = 2.0) {
  if (!(radius > 0.0)) throw InvalidParameter("graph radius must be positive");
  if (s.vertices.empty()) throw InvalidInput("build_graph: empty surface");
  const GeodesicEngine engine(s);
  const std::vector<int> picked =
      sampler == Sampler::pca ? sample_nodes_pca(s, engine, radius) : sample_nodes_farthest(s, engine, radius);

  DeformationGraph g;
  g.radius = radius;
  g.edge_radius = edge_radius_factor * radius;
  for (int idx : picked) g.nodes.push_back({idx, s.vertices[idx]});

  const int n = static_cast<int>(s.vertices.size());
  const int r = g.node_count();
  const double cap = std::max(radius, g.edge_radius);
  std::vector<std::vector<double>> fields(r);
  for (int j = 0; j < r; ++j) fields[j] = engine.from(picked[j], cap).distances;

  for (int a = 0; a < r; ++a) {
    for (int b = a + 1; b < r; ++b) {
      const double d = std::min(fields[a][picked[b]], fields[b][picked[a]]);
      if (d < g.edge_radius) g.node_edges.push_back({a, b});
    }
  }

  g.influence.assign(n, {});
  for (int i = 0; i < n; ++i) {
    auto& inf = g.influence[i];
    double total = 0.0;
    for (int j = 0; j < r; ++j) {
      const double d = fields[j][i];
      if (d < radius) {
        const double w = influence_kernel(d, radius);
        if (w > 0.0) {
          inf.push_back({j, w});
          total += w;
        }
      }
    }
    if (inf.empty()) {
      g.uncovered.push_back(i);
      int best = -1;
      double best_d = kInfinity;
      for (int j = 0; j < r; ++j)
        if (fields[j][i] < best_d) best_d = fields[j][i], best = j;
      if (best < 0) {
        for (int j = 0; j < r; ++j) {
          const double d = (s.vertices[i] - g.nodes[j].position).norm();
          if (d < best_d) best_d = d, best = j;
        }
      }
      inf.push_back({best, 1.0});
      continue;
    }
    for (InfluenceWeight& iw : inf) iw.weight /= total;
  }
  return g;
}

/// Node neighbour lists N(p_i) from the undirected edge set.
inline std::vector<std::vector<int>> node_neighbors(const DeformationGraph& g) {
  std::vector<std::vector<int>> nb(g.node_count());
  for (const Edge& e : g.node_edges) {
    nb[e[0]].push_back(e[1]);
    nb[e[1]].push_back(e[0]);
  }
  return nb;
}

/// Blended position: sum_j w_ij (A_j (v_i - p_j) + p_j + t_j).
inline Vec3 transform_point(const DeformationGraph& g, const TransformState& state, const Vec3& v, int i) {
  Vec3 out = Vec3::Zero();
  for (const InfluenceWeight& iw : g.influence[i]) {
    const Vec3& p = g.nodes[iw.node].position;
    out += iw.weight * (state.affine(iw.node) * (v - p) + p + state.translation(iw.node));
  }
  return out;
}

inline Points transform_points(const DeformationGraph& g, const TransformState& state, std::span<const Vec3> source) {
  if (static_cast<int>(source.size()) != g.point_count())
    throw InvalidInput("transform_points: point count does not match the graph");
  if (state.node_count() != g.node_count()) throw InvalidInput("transform_points: state size mismatch");
  Points out(source.size());
  for (int i = 0; i < static_cast<int>(source.size()); ++i) out[i] = transform_point(g, state, source[i], i);
  return out;
}

/// Graph nodes as a point PLY plus a plain-text edge list next to it.
inline void write_graph_debug(const DeformationGraph& g, const std::filesystem::path& ply_path,
                              const std::filesystem::path& edges_path) {
  Surface pts;
  for (const GraphNode& nd : g.nodes) pts.vertices.push_back(nd.position);
  write_ply(pts, ply_path);
  std::ofstream out(edges_path);
  if (!out) throw IoError("cannot write '" + edges_path.string() + "'");
  for (const Edge& e : g.node_edges) out << e[0] << ' ' << e[1] << '\n';
}

}  // namespace rnrr
