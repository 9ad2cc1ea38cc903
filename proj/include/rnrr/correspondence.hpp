#pragma once

// Closest-point correspondences, hard rejection, and rigid ICP used to
// initialize the non-rigid solve.

#include "rnrr/common.hpp"
#include "rnrr/geometry_io.hpp"
#include "rnrr/graph.hpp"
#include "rnrr/kdtree.hpp"
#include "rnrr/transform_state.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace rnrr {

struct CorrespondenceSet {
  std::vector<int> target_index;
  Points target_position;
  std::vector<char> valid;
  std::vector<double> distance;

  std::size_t size() const { return target_index.size(); }
  std::size_t valid_count() const {
    std::size_t c = 0;
    for (char v : valid) c += v ? 1 : 0;
    return c;
  }
};

/// Hard rejection thresholds: pairs farther than max_distance or with normals
/// more than max_angle_deg apart are invalid. An angle >= 180 disables the
/// normal test.
struct Rejection {
  double max_distance = 0.3;
  double max_angle_deg = 60.0;
  std::span<const Vec3> query_normals;
};

inline CorrespondenceSet find_correspondences(std::span<const Vec3> queries, const Surface& target,
                                              const KdTree& index, const std::optional<Rejection>& reject = std::nullopt) {
  const bool angle_test = reject && reject->max_angle_deg < 180.0;
  if (angle_test && (reject->query_normals.size() != queries.size() || !target.has_normals()))
    throw InvalidInput("find_correspondences: normal rejection needs query and target normals");
  const int n = static_cast<int>(queries.size());
  CorrespondenceSet c;
  c.target_index.resize(n);
  c.target_position.resize(n);
  c.valid.assign(n, 1);
  c.distance.resize(n);
  const double cos_limit = angle_test ? std::cos(reject->max_angle_deg * std::numbers::pi / 180.0) : -2.0;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const Neighbor nb = index.nearest(queries[i]);
    c.target_index[i] = nb.index;
    c.target_position[i] = target.vertices[nb.index];
    c.distance[i] = (queries[i] - target.vertices[nb.index]).norm();
    if (reject) {
      bool ok = c.distance[i] <= reject->max_distance;
      if (ok && angle_test) ok = reject->query_normals[i].dot(target.normals[nb.index]) >= cos_limit;
      c.valid[i] = ok ? 1 : 0;
    }
  }
  return c;
}

/// CSV: source index, target index, distance, valid flag.
inline void write_correspondences_csv(const CorrespondenceSet& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "source_index,target_index,distance,valid\n";
  for (std::size_t i = 0; i < c.size(); ++i)
    out << i << ',' << c.target_index[i] << ',' << detail::format_double(c.distance[i]) << ','
        << int(c.valid[i]) << '\n';
}

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  /// (this * other)(p) = this(other(p))
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

/// Least-squares rigid map taking `from` onto `to` (SVD of the
/// cross-covariance, reflection removed via the smallest singular vector).
inline RigidTransform best_rigid_transform(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.size() != to.size() || from.empty()) throw InvalidInput("best_rigid_transform: bad point sets");
  const Vec3 cf = centroid(from);
  const Vec3 ct = centroid(to);
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) h += (from[i] - cf) * (to[i] - ct).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = ct - t.rotation * cf;
  return t;
}

struct IcpOptions {
  int iterations = 15;
  double max_distance = 0.3;   // eps_d
  double max_angle_deg = 60.0;  // theta
  /// Optional (source index, target index) feature pairs used for the
  /// starting alignment instead of the identity.
  std::vector<std::pair<int, int>> seed_pairs;
};

struct IcpReport {
  /// Mean squared distance over valid pairs at the start of each iteration.
  std::vector<double> mean_squared_distance;
  std::vector<std::size_t> valid_pairs;
};

/// Point-to-point ICP with distance/normal rejection.
inline RigidTransform rigid_icp_init(const Surface& source, const Surface& target, const IcpOptions& opt = {},
                                     IcpReport* report = nullptr) {
  const bool angle_test = opt.max_angle_deg < 180.0;
  if (angle_test && (!source.has_normals() || !target.has_normals()))
    throw InvalidInput("rigid_icp_init: normal rejection needs normals on both surfaces");

  RigidTransform current;
  if (!opt.seed_pairs.empty()) {
    Points from, to;
    for (auto [si, ti] : opt.seed_pairs) {
      if (si < 0 || si >= static_cast<int>(source.size()) || ti < 0 || ti >= static_cast<int>(target.size()))
        throw InvalidInput("rigid_icp_init: seed pair index out of range");
      from.push_back(source.vertices[si]);
      to.push_back(target.vertices[ti]);
    }
    if (from.size() < 3) throw InitializationError("fewer than 3 seed pairs", 0);
    current = best_rigid_transform(from, to);
  }

  const KdTree index(target.vertices);
  const int n = static_cast<int>(source.size());
  Points moved(n), moved_normals;
  for (int it = 1; it <= opt.iterations; ++it) {
    for (int i = 0; i < n; ++i) moved[i] = current.apply(source.vertices[i]);
    if (angle_test) {
      moved_normals.resize(n);
      for (int i = 0; i < n; ++i) moved_normals[i] = current.rotation * source.normals[i];
    }
    const CorrespondenceSet c =
        find_correspondences(moved, target, index, Rejection{opt.max_distance, opt.max_angle_deg, moved_normals});
    Points from, to;
    double mse = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!c.valid[i]) continue;
      from.push_back(source.vertices[i]);
      to.push_back(c.target_position[i]);
      mse += c.distance[i] * c.distance[i];
    }
    if (from.size() < 3) throw InitializationError("fewer than 3 valid correspondence pairs", it);
    if (report) {
      report->mean_squared_distance.push_back(mse / static_cast<double>(from.size()));
      report->valid_pairs.push_back(from.size());
    }
    current = best_rigid_transform(from, to);
  }
  return current;
}

/// Per-node transforms reproducing a global rigid map through the blend:
/// A_j = R, t_j = R p_j + t - p_j.
inline TransformState lift_rigid_to_state(const RigidTransform& rt, const DeformationGraph& g) {
  TransformState s = TransformState::identity(g.node_count());
  for (int j = 0; j < g.node_count(); ++j) {
    const Vec3& p = g.nodes[j].position;
    s.set(j, rt.rotation, rt.rotation * p + rt.translation - p);
  }
  return s;
}

}  // namespace rnrr
