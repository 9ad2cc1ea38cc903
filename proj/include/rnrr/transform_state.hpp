#pragma once

#include "rnrr/common.hpp"

#include <Eigen/Core>

namespace rnrr {

/// Stacked per-node affine transforms.
///
/// Node j occupies rows [4j, 4j+4) of a 4r x 3 matrix: the first three rows
/// hold A_j^T and the fourth holds t_j^T, so that [x^T, 1] * block = (A_j x + t_j)^T.
struct TransformState {
  Eigen::MatrixX3d X;

  TransformState() = default;
  explicit TransformState(Eigen::MatrixX3d m) : X(std::move(m)) {}

  static TransformState identity(int nodes) {
    TransformState s;
    s.X = Eigen::MatrixX3d::Zero(4 * nodes, 3);
    for (int j = 0; j < nodes; ++j) s.X.block<3, 3>(4 * j, 0).setIdentity();
    return s;
  }

  int node_count() const { return static_cast<int>(X.rows() / 4); }

  Mat3 affine(int j) const { return X.block<3, 3>(4 * j, 0).transpose(); }
  Vec3 translation(int j) const { return X.row(4 * j + 3).transpose(); }

  void set(int j, const Mat3& a, const Vec3& t) {
    X.block<3, 3>(4 * j, 0) = a.transpose();
    X.row(4 * j + 3) = t.transpose();
  }

  bool finite() const { return X.allFinite(); }
};

}  // namespace rnrr
