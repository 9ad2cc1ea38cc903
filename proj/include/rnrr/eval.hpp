#pragma once

// Accuracy metrics and synthetic corruption of surfaces for experiments.

#include "rnrr/common.hpp"
#include "rnrr/geodesics.hpp"
#include "rnrr/geometry_io.hpp"
#include "rnrr/graph.hpp"
#include "rnrr/transform_state.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace rnrr {

/// Ground-truth deformed position for every source vertex, index-aligned.
struct GroundTruth {
  Points gt_positions;
};

/// sqrt(mean_i |result_i - gt_i|^2)
inline double rmse(std::span<const Vec3> result, std::span<const Vec3> gt) {
  if (result.size() != gt.size()) throw InvalidInput("rmse: length mismatch");
  if (result.empty()) throw InvalidInput("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < result.size(); ++i) sum += (result[i] - gt[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(result.size()));
}

inline double rmse(std::span<const Vec3> result, const GroundTruth& gt) { return rmse(result, gt.gt_positions); }

/// RMSE over a subset of indices.
inline double rmse(std::span<const Vec3> result, std::span<const Vec3> gt, std::span<const int> subset) {
  if (result.size() != gt.size()) throw InvalidInput("rmse: length mismatch");
  if (subset.empty()) throw InvalidInput("rmse: empty subset");
  double sum = 0.0;
  for (int i : subset) sum += (result[i] - gt[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(subset.size()));
}

inline std::vector<double> pointwise_errors(std::span<const Vec3> result, std::span<const Vec3> gt) {
  if (result.size() != gt.size()) throw InvalidInput("pointwise_errors: length mismatch");
  std::vector<double> e(result.size());
  for (std::size_t i = 0; i < result.size(); ++i) e[i] = (result[i] - gt[i]).norm();
  return e;
}

namespace detail {

inline std::vector<int> random_subset(std::size_t n, double fraction, std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidParameter("fraction must lie in [0, 1]");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Displaces floor(fraction * |V|) random vertices along their normals by
/// N(0, sigma^2) offsets. Normals are left as they were.
inline Surface add_gaussian_normal_noise(const Surface& s, double fraction, double sigma, std::uint64_t seed) {
  if (!s.has_normals()) throw InvalidInput("add_gaussian_normal_noise: surface has no normals");
  if (!(sigma >= 0.0)) throw InvalidParameter("sigma must be non-negative");
  Surface out = s;
  std::mt19937_64 rng(seed);
  const std::vector<int> picked = detail::random_subset(s.size(), fraction, rng);
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (int i : picked) out.vertices[i] += noise(rng) * s.normals[i];
  return out;
}

/// Displaces floor(fraction * |V|) random vertices along +/- their normals by
/// exactly `magnitude`, with a random sign per vertex.
inline Surface add_normal_outliers(const Surface& s, double fraction, double magnitude, std::uint64_t seed) {
  if (!s.has_normals()) throw InvalidInput("add_normal_outliers: surface has no normals");
  Surface out = s;
  std::mt19937_64 rng(seed);
  const std::vector<int> picked = detail::random_subset(s.size(), fraction, rng);
  std::bernoulli_distribution sign(0.5);
  for (int i : picked) out.vertices[i] += (sign(rng) ? magnitude : -magnitude) * s.normals[i];
  return out;
}

struct PartialSurface {
  Surface surface;
  std::vector<int> kept;  // original index of every retained vertex
};

/// Deletes every vertex within `radius` (geodesic) of the seed together with
/// incident faces, and reindexes the rest.
inline PartialSurface remove_region(const Surface& s, int seed, double radius) {
  if (!(radius > 0.0)) throw InvalidParameter("remove_region: radius must be positive");
  const GeodesicField f = geodesic_from(s, seed, radius);
  const int n = static_cast<int>(s.size());
  PartialSurface out;
  std::vector<int> remap(n, -1);
  for (int i = 0; i < n; ++i) {
    if (f.distances[i] <= radius) continue;
    remap[i] = static_cast<int>(out.kept.size());
    out.kept.push_back(i);
  }
  if (out.kept.empty()) throw InvalidInput("remove_region: removal leaves an empty surface");
  for (int i : out.kept) {
    out.surface.vertices.push_back(s.vertices[i]);
    if (s.has_normals()) out.surface.normals.push_back(s.normals[i]);
  }
  for (const Face& fc : s.faces) {
    if (remap[fc[0]] < 0 || remap[fc[1]] < 0 || remap[fc[2]] < 0) continue;
    out.surface.faces.push_back({remap[fc[0]], remap[fc[1]], remap[fc[2]]});
  }
  if (out.surface.has_faces()) {
    out.surface.edges = derive_edges(out.surface.faces);
  } else {
    for (const Edge& e : s.edges)
      if (remap[e[0]] >= 0 && remap[e[1]] >= 0) out.surface.edges.push_back({remap[e[0]], remap[e[1]]});
  }
  return out;
}

struct SyntheticPair {
  Surface target;
  GroundTruth truth;
};

/// Target = source pushed through the graph blend with the given state.
/// Normals of the target are recomputed when the source had them.
inline SyntheticPair synthesize_deformation(const Surface& s, const DeformationGraph& g, const TransformState& state) {
  for (int j = 0; j < state.node_count(); ++j)
    if (!state.affine(j).allFinite() || !state.translation(j).allFinite())
      throw InvalidInput("synthesize_deformation: non-finite node transform");
  SyntheticPair out;
  out.target = s;
  out.target.vertices = transform_points(g, state, s.vertices);
  if (s.has_normals() || s.has_faces()) out.target = compute_normals(out.target);
  out.truth.gt_positions = out.target.vertices;
  return out;
}

/// Per-node rotations about random axes with angles uniform in
/// [0, max_angle_deg] and translations uniform in [-max_translation, max_translation]^3.
inline TransformState random_node_transforms(int nodes, double max_angle_deg, double max_translation,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, max_angle_deg * std::numbers::pi / 180.0);
  TransformState st = TransformState::identity(nodes);
  for (int j = 0; j < nodes; ++j) {
    Vec3 axis(unit(rng), unit(rng), unit(rng));
    if (axis.norm() < 1e-9) axis = Vec3::UnitZ();
    const Mat3 r = Eigen::AngleAxisd(angle(rng), axis.normalized()).toRotationMatrix();
    const Vec3 t(unit(rng) * max_translation, unit(rng) * max_translation, unit(rng) * max_translation);
    st.set(j, r, t);
  }
  return st;
}

inline void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
  Surface pts;
  pts.vertices = gt.gt_positions;
  write_ply(pts, path);
}

inline GroundTruth read_ground_truth(const std::filesystem::path& path) {
  return {load_surface(path).vertices};
}

}  // namespace rnrr
