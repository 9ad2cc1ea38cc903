#pragma once

// Robust registration energy, its quadratic majorizer, and the linear
// algebra (F, P, B, Y, J) that puts the majorizer in matrix form.

#include "rnrr/common.hpp"
#include "rnrr/correspondence.hpp"
#include "rnrr/graph.hpp"
#include "rnrr/transform_state.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseCore>

#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace rnrr {

enum class Kernel { welsch, l2 };

struct EnergyParams {
  double nu_a = 1.0;
  double nu_r = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  Kernel kernel = Kernel::welsch;
};

inline void check_params(const EnergyParams& p) {
  if (!(p.nu_a > 0.0) || !(p.nu_r > 0.0)) throw InvalidParameter("nu_a and nu_r must be positive");
  if (!(p.alpha >= 0.0) || !(p.beta >= 0.0)) throw InvalidParameter("alpha and beta must be non-negative");
}

/// Welsch's function 1 - exp(-x^2 / (2 nu^2)).
inline double welsch(double x, double nu) {
  if (!(nu > 0.0)) throw InvalidParameter("welsch: nu must be positive");
  return -std::expm1(-(x * x) / (2.0 * nu * nu));
}

inline double penalty(double x, double nu, Kernel k) { return k == Kernel::welsch ? welsch(x, nu) : x * x; }

/// Coefficient of x^2 in the quadratic majorizer of the penalty at y.
/// Welsch: exp(-y^2/(2 nu^2)) / (2 nu^2); l2: 1.
inline double surrogate_weight(double y, double nu, Kernel k) {
  if (k == Kernel::l2) return 1.0;
  const double s = 2.0 * nu * nu;
  return std::exp(-(y * y) / s) / s;
}

/// Sum of penalties of |v_i - u_i| with u taken from the given correspondences.
inline double energy_align(std::span<const Vec3> transformed, const CorrespondenceSet& corr, double nu_a,
                           Kernel k = Kernel::welsch) {
  double e = 0.0;
  for (std::size_t i = 0; i < transformed.size(); ++i)
    e += penalty((transformed[i] - corr.target_position[i]).norm(), nu_a, k);
  return e;
}

inline double energy_align(const DeformationGraph& g, const TransformState& x, std::span<const Vec3> source,
                           const CorrespondenceSet& corr, double nu_a, Kernel k = Kernel::welsch) {
  return energy_align(transform_points(g, x, source), corr, nu_a, k);
}

/// D_ij = A_j (p_i - p_j) + p_j + t_j - (p_i + t_i)
inline Vec3 residual_Dij(const TransformState& x, int i, int j, std::span<const Vec3> node_positions) {
  const Vec3& pi = node_positions[i];
  const Vec3& pj = node_positions[j];
  return x.affine(j) * (pi - pj) + pj + x.translation(j) - (pi + x.translation(i));
}

inline Points node_positions(const DeformationGraph& g) {
  Points p;
  p.reserve(g.nodes.size());
  for (const GraphNode& n : g.nodes) p.push_back(n.position);
  return p;
}

/// Sum over both directions of every graph edge.
inline double energy_reg(const DeformationGraph& g, const TransformState& x, double nu_r, Kernel k = Kernel::welsch) {
  const Points p = node_positions(g);
  double e = 0.0;
  for (const Edge& ed : g.node_edges) {
    e += penalty(residual_Dij(x, ed[0], ed[1], p).norm(), nu_r, k);
    e += penalty(residual_Dij(x, ed[1], ed[0], p).norm(), nu_r, k);
  }
  return e;
}

/// Closest rotation in Frobenius norm: U diag(1, 1, det(U V^T)) V^T.
/// When the projection is not unique the result follows the SVD's ordering.
inline Mat3 project_rotation(const Mat3& a) {
  Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return u * d * v.transpose();
}

inline double energy_rot(const TransformState& x) {
  double e = 0.0;
  for (int j = 0; j < x.node_count(); ++j) {
    const Mat3 a = x.X.block<3, 3>(4 * j, 0);
    e += (a - project_rotation(a)).squaredNorm();
  }
  return e;
}

inline double total_energy(const DeformationGraph& g, const TransformState& x, std::span<const Vec3> source,
                           const CorrespondenceSet& corr, const EnergyParams& p) {
  return energy_align(g, x, source, corr, p.nu_a, p.kernel) + p.alpha * energy_reg(g, x, p.nu_r, p.kernel) +
         p.beta * energy_rot(x);
}

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Weight-independent matrices of the matrix-form energy. Fixed for a given
/// graph and source, so they are built once per registration.
///
/// Row i of F X + P is the blended position of source point i. Row e of
/// B X - Y is D_ij for the e-th directed edge occurrence (i, j).
struct LinearModel {
  SparseRowMatrix F;  // n x 4r
  Eigen::MatrixX3d P;  // n x 3
  SparseRowMatrix B;  // 2|E| x 4r
  Eigen::MatrixX3d Y;  // 2|E| x 3
  std::vector<Edge> directed_edges;  // (i, j) per row of B
  Eigen::VectorXd J;  // 4r diagonal mask: 1 on A-rows, 0 on t-rows

  int node_count() const { return static_cast<int>(J.size() / 4); }
};

inline std::shared_ptr<const LinearModel> build_linear_model(const DeformationGraph& g, std::span<const Vec3> source) {
  if (static_cast<int>(source.size()) != g.point_count())
    throw InvalidInput("build_linear_model: source size does not match graph");
  auto m = std::make_shared<LinearModel>();
  const int n = static_cast<int>(source.size());
  const int r = g.node_count();

  std::vector<Eigen::Triplet<double>> trip;
  m->P = Eigen::MatrixX3d::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    for (const InfluenceWeight& iw : g.influence[i]) {
      const Vec3& p = g.nodes[iw.node].position;
      const Vec3 d = source[i] - p;
      for (int k = 0; k < 3; ++k) trip.emplace_back(i, 4 * iw.node + k, iw.weight * d[k]);
      trip.emplace_back(i, 4 * iw.node + 3, iw.weight);
      m->P.row(i) += iw.weight * p.transpose();
    }
  }
  m->F.resize(n, 4 * r);
  m->F.setFromTriplets(trip.begin(), trip.end());

  trip.clear();
  for (const Edge& e : g.node_edges) {
    m->directed_edges.push_back({e[0], e[1]});
    m->directed_edges.push_back({e[1], e[0]});
  }
  const int rows = static_cast<int>(m->directed_edges.size());
  m->Y = Eigen::MatrixX3d::Zero(rows, 3);
  for (int row = 0; row < rows; ++row) {
    const int i = m->directed_edges[row][0];
    const int j = m->directed_edges[row][1];
    const Vec3 d = g.nodes[i].position - g.nodes[j].position;
    for (int k = 0; k < 3; ++k) trip.emplace_back(row, 4 * j + k, d[k]);
    trip.emplace_back(row, 4 * j + 3, 1.0);
    trip.emplace_back(row, 4 * i + 3, -1.0);
    m->Y.row(row) = d.transpose();
  }
  m->B.resize(rows, 4 * r);
  m->B.setFromTriplets(trip.begin(), trip.end());

  m->J = Eigen::VectorXd::Zero(4 * r);
  for (int j = 0; j < r; ++j) m->J.segment<3>(4 * j).setOnes();
  return m;
}

/// Quadratic majorizer of the energy at X_k with correspondences frozen.
struct SurrogateSystem {
  std::shared_ptr<const LinearModel> model;
  Eigen::MatrixX3d U;   // n x 3 frozen targets
  Eigen::VectorXd wa;   // sqrt of alignment weights (diagonal of W_a)
  Eigen::VectorXd wr;   // sqrt of regularization weights (diagonal of W_r)
  EnergyParams params;
};

inline SurrogateSystem assemble_surrogate(std::shared_ptr<const LinearModel> model, const TransformState& xk,
                                          const CorrespondenceSet& corr, const EnergyParams& p) {
  check_params(p);
  SurrogateSystem sys;
  sys.params = p;
  const int n = static_cast<int>(model->F.rows());
  if (static_cast<int>(corr.size()) != n) throw InvalidInput("assemble_surrogate: correspondence count mismatch");
  sys.U.resize(n, 3);
  for (int i = 0; i < n; ++i) sys.U.row(i) = corr.target_position[i].transpose();

  const Eigen::MatrixX3d va = model->F * xk.X + model->P - sys.U;
  sys.wa.resize(n);
  for (int i = 0; i < n; ++i) sys.wa[i] = std::sqrt(surrogate_weight(va.row(i).norm(), p.nu_a, p.kernel));

  const Eigen::MatrixX3d dr = model->B * xk.X - model->Y;
  sys.wr.resize(dr.rows());
  for (int e = 0; e < dr.rows(); ++e) sys.wr[e] = std::sqrt(surrogate_weight(dr.row(e).norm(), p.nu_r, p.kernel));
  sys.model = std::move(model);
  return sys;
}

inline SurrogateSystem assemble_surrogate(const DeformationGraph& g, std::span<const Vec3> source,
                                          const TransformState& xk, const CorrespondenceSet& corr,
                                          const EnergyParams& p) {
  return assemble_surrogate(build_linear_model(g, source), xk, corr, p);
}

/// Z: per-node rotation projections stacked like X, zero on t-rows.
inline Eigen::MatrixX3d rotation_targets(const Eigen::MatrixX3d& x) {
  Eigen::MatrixX3d z = Eigen::MatrixX3d::Zero(x.rows(), 3);
  for (Eigen::Index j = 0; j < x.rows() / 4; ++j) z.block<3, 3>(4 * j, 0) = project_rotation(x.block<3, 3>(4 * j, 0));
  return z;
}

inline double surrogate_align(const SurrogateSystem& sys, const Eigen::MatrixX3d& x) {
  return (sys.wa.asDiagonal() * (sys.model->F * x + sys.model->P - sys.U)).squaredNorm();
}

inline double surrogate_reg(const SurrogateSystem& sys, const Eigen::MatrixX3d& x) {
  return (sys.wr.asDiagonal() * (sys.model->B * x - sys.model->Y)).squaredNorm();
}

/// ||W_a (F X + P - U)||^2 + alpha ||W_r (B X - Y)||^2 + beta E_rot(X)
inline double surrogate_energy(const SurrogateSystem& sys, const Eigen::MatrixX3d& x) {
  return surrogate_align(sys, x) + sys.params.alpha * surrogate_reg(sys, x) +
         sys.params.beta * energy_rot(TransformState(x));
}

/// 2 [F^T W_a^2 (F X + P - U) + alpha B^T W_r^2 (B X - Y) + beta (J X - Z)],
/// with Z re-projected at X.
inline Eigen::MatrixX3d surrogate_gradient(const SurrogateSystem& sys, const Eigen::MatrixX3d& x) {
  const LinearModel& m = *sys.model;
  const Eigen::VectorXd wa2 = sys.wa.array().square();
  const Eigen::VectorXd wr2 = sys.wr.array().square();
  Eigen::MatrixX3d g = m.F.transpose() * (wa2.asDiagonal() * (m.F * x + m.P - sys.U));
  if (m.B.rows() > 0) g += sys.params.alpha * (m.B.transpose() * (wr2.asDiagonal() * (m.B * x - m.Y)));
  g += sys.params.beta * (m.J.asDiagonal() * x - rotation_targets(x));
  return 2.0 * g;
}

/// Diagonal shift added to H0 so nodes without coverage on their t-rows
/// still factor.
inline constexpr double kH0Jitter = 1e-8;

/// 2 (F^T W_a^2 F + alpha B^T W_r^2 B + beta J) + jitter I
inline SparseMatrix assemble_H0(const SurrogateSystem& sys) {
  const LinearModel& m = *sys.model;
  const Eigen::Index dim = m.F.cols();
  const Eigen::VectorXd wa2 = sys.wa.array().square();
  const Eigen::VectorXd wr2 = sys.wr.array().square();
  SparseMatrix h = SparseMatrix(m.F.transpose()) * wa2.asDiagonal() * SparseMatrix(m.F);
  if (m.B.rows() > 0) {
    const SparseMatrix reg = SparseMatrix(m.B.transpose()) * wr2.asDiagonal() * SparseMatrix(m.B);
    h += sys.params.alpha * reg;
  }
  SparseMatrix diag(dim, dim);
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index k = 0; k < dim; ++k) trip.emplace_back(k, k, sys.params.beta * m.J[k] + kH0Jitter / 2.0);
  diag.setFromTriplets(trip.begin(), trip.end());
  h += diag;
  h *= 2.0;
  // The sparse products round differently above and below the diagonal.
  h = SparseMatrix(0.5 * (h + SparseMatrix(h.transpose())));
  h.makeCompressed();
  return h;
}

}  // namespace rnrr
