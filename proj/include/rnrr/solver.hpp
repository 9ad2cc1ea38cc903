#pragma once

// Majorization-minimization registration driver with an L-BFGS inner
// solver and nu-annealing.

#include "rnrr/common.hpp"
#include "rnrr/correspondence.hpp"
#include "rnrr/energy.hpp"
#include "rnrr/geometry_io.hpp"
#include "rnrr/graph.hpp"
#include "rnrr/kdtree.hpp"
#include "rnrr/lbfgs.hpp"
#include "rnrr/transform_state.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rnrr {

struct SolverParams {
  // L-BFGS
  int history = 5;           // m
  double gamma = 0.3;        // sufficient-decrease constant
  double eps1 = 1e-3;        // inner: stop when the surrogate drops by less than this
  int max_inner = 1000;      // inner iteration guard
  // MM
  double eps2 = 1e-3;        // outer: stop when max point displacement is below this
  int max_outer = 100;       // I_max, per annealing stage
  // Robust kernel widths, as multiples of l-bar (mean source edge length)
  // or d-bar (median initial correspondence distance).
  double nu_a_max_factor = 10.0;  // x d-bar
  double nu_a_min_factor = 0.5;   // x l-bar
  double nu_r_max_factor = 40.0;  // x l-bar
  bool fixed_nu = false;
  Kernel kernel = Kernel::welsch;
  // Term weights: alpha = k_alpha |V| / |E_G|, beta = k_beta |V| / |V_G|
  double k_alpha = 1.0;
  double k_beta = 1.0;
  // Graph
  Sampler sampler = Sampler::pca;
  double radius_factor = 5.0;       // R = radius_factor * l-bar
  double edge_radius_factor = 2.0;  // node edges below edge_radius_factor * R
  // Rigid initialization
  bool rigid_init = true;
  IcpOptions icp;
  // Implementation switches
  bool reuse_symbolic = true;
  bool record_timing = true;

  void validate() const {
    if (history < 0) throw InvalidParameter("history size must be non-negative");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidParameter("gamma must lie in [0, 1)");
    if (!(eps1 > 0.0) || !(eps2 > 0.0)) throw InvalidParameter("tolerances must be positive");
    if (max_outer < 1 || max_inner < 1) throw InvalidParameter("iteration caps must be positive");
    if (!(nu_a_min_factor > 0.0) || !(nu_a_max_factor > 0.0) || !(nu_r_max_factor > 0.0))
      throw InvalidParameter("nu factors must be positive");
    if (!(radius_factor > 0.0) || !(edge_radius_factor > 0.0)) throw InvalidParameter("radius factors must be positive");
    if (!(k_alpha >= 0.0) || !(k_beta >= 0.0)) throw InvalidParameter("k_alpha and k_beta must be non-negative");
  }
};

/// Sparse Cholesky of H0 with the symbolic analysis kept across numeric
/// factorizations as long as the sparsity pattern is unchanged.
class H0Factorization {
 public:
  explicit H0Factorization(bool reuse_symbolic = true) : reuse_symbolic_(reuse_symbolic) {}

  void factorize(const SparseMatrix& h) {
    if (!reuse_symbolic_ || !same_pattern(h)) {
      llt_.analyzePattern(h);
      outer_.assign(h.outerIndexPtr(), h.outerIndexPtr() + h.outerSize() + 1);
      inner_.assign(h.innerIndexPtr(), h.innerIndexPtr() + h.nonZeros());
      ++symbolic_count_;
    }
    llt_.factorize(h);
    if (llt_.info() != Eigen::Success) throw FactorizationError("H0 is not positive definite");
  }

  /// H0^{-1} Q, one independent solve per column.
  Eigen::MatrixX3d solve(const Eigen::MatrixX3d& q) const {
    Eigen::MatrixX3d r(q.rows(), 3);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < 3; ++c) r.col(c) = llt_.solve(q.col(c));
    return r;
  }

  int symbolic_count() const { return symbolic_count_; }

 private:
  bool same_pattern(const SparseMatrix& h) const {
    if (outer_.empty() || !h.isCompressed()) return false;
    if (static_cast<Eigen::Index>(outer_.size()) != h.outerSize() + 1 || static_cast<Eigen::Index>(inner_.size()) != h.nonZeros())
      return false;
    return std::equal(outer_.begin(), outer_.end(), h.outerIndexPtr()) &&
           std::equal(inner_.begin(), inner_.end(), h.innerIndexPtr());
  }

  bool reuse_symbolic_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  std::vector<SparseMatrix::StorageIndex> outer_, inner_;
  int symbolic_count_ = 0;
};

struct InnerReport {
  int iterations = 0;
  std::vector<double> energies;  // surrogate value at every iterate, starting with X_k
  bool line_search_failed = false;
};

/// Minimizes the surrogate from X_k with L-BFGS until one step lowers it by
/// less than eps1. H0 is factored once per call.
inline Eigen::MatrixX3d solve_inner(const SurrogateSystem& sys, const Eigen::MatrixX3d& xk, const SolverParams& params,
                                    H0Factorization& factor, InnerReport* report = nullptr) {
  factor.factorize(assemble_H0(sys));
  auto h0_solve = [&](const Eigen::MatrixX3d& q) { return factor.solve(q); };
  auto energy = [&](const Eigen::MatrixX3d& x) { return surrogate_energy(sys, x); };

  LbfgsHistory<Eigen::MatrixX3d> hist(static_cast<std::size_t>(params.history));
  Eigen::MatrixX3d x = xk;
  double e = energy(x);
  Eigen::MatrixX3d g = surrogate_gradient(sys, x);
  if (report) report->energies.push_back(e);

  for (int it = 1; it <= params.max_inner; ++it) {
    if (report) report->iterations = it;
    Eigen::MatrixX3d d = two_loop_direction(hist, g, h0_solve);
    bool steepest = false;
    if (!(frobenius_dot(g, d) < 0.0)) {
      hist.clear();
      d = -h0_solve(g);
      if (!(frobenius_dot(g, d) < 0.0)) {
        d = -g;
        steepest = true;
      }
    }
    auto ls = line_search(energy, x, e, d, g, params.gamma);
    if (!ls.accepted && !steepest) {
      d = -g;
      ls = line_search(energy, x, e, d, g, params.gamma);
    }
    if (!ls.accepted) {
      if (report) report->line_search_failed = true;
      break;
    }
    Eigen::MatrixX3d g_next = surrogate_gradient(sys, ls.x);
    hist.push(ls.x - x, g_next - g);
    const double decrease = e - ls.energy;
    x = std::move(ls.x);
    e = ls.energy;
    g = std::move(g_next);
    if (report) report->energies.push_back(e);
    if (decrease < params.eps1) break;
  }
  return x;
}

struct TraceRow {
  int stage = 0;
  int outer_iter = 0;
  double nu_a = 0.0;
  double nu_r = 0.0;
  double energy = 0.0;
  double max_disp = 0.0;
  double elapsed_seconds = 0.0;
};

enum class Termination { converged, max_iterations };

inline const char* to_string(Termination t) { return t == Termination::converged ? "converged" : "max_iterations"; }

struct StageReport {
  double nu_a = 0.0;
  double nu_r = 0.0;
  double initial_energy = 0.0;  // with correspondences at the stage's starting state
  int iterations = 0;
  Termination termination = Termination::converged;
  std::vector<InnerReport> inner;
};

struct RegistrationResult {
  TransformState final_state;
  Points transformed_source;
  std::vector<TraceRow> trace;
  std::vector<StageReport> stages;
  DeformationGraph graph;
  RigidTransform rigid;
  double mean_edge_length = 0.0;
  double median_initial_distance = 0.0;
  EnergyParams final_params;
  int symbolic_factorizations = 0;
};

/// Energy with the robust kernel evaluated through the matrix model.
inline double model_energy(const LinearModel& m, const Eigen::MatrixX3d& x, const Eigen::MatrixX3d& u,
                           const EnergyParams& p) {
  const Eigen::MatrixX3d ra = m.F * x + m.P - u;
  double e = 0.0;
  for (Eigen::Index i = 0; i < ra.rows(); ++i) e += penalty(ra.row(i).norm(), p.nu_a, p.kernel);
  double reg = 0.0;
  if (m.B.rows() > 0) {
    const Eigen::MatrixX3d rr = m.B * x - m.Y;
    for (Eigen::Index i = 0; i < rr.rows(); ++i) reg += penalty(rr.row(i).norm(), p.nu_r, p.kernel);
  }
  return e + p.alpha * reg + p.beta * energy_rot(TransformState(x));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

/// Number of annealing stages: nu_a halves from nu_a_max, clamped at
/// nu_a_min, and the clamped value gets a stage of its own.
inline int annealing_stage_count(double nu_a_max, double nu_a_min) {
  int stages = 1;
  if (nu_a_max <= nu_a_min) return stages;
  double nu = nu_a_max;
  while (nu != nu_a_min) {
    nu = std::max(0.5 * nu, nu_a_min);
    ++stages;
  }
  return stages;
}

namespace detail {

inline Points rows_to_points(const Eigen::MatrixX3d& m) {
  Points p(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) p[i] = m.row(i).transpose();
  return p;
}

inline Eigen::MatrixX3d points_to_rows(std::span<const Vec3> p) {
  Eigen::MatrixX3d m(p.size(), 3);
  for (std::size_t i = 0; i < p.size(); ++i) m.row(i) = p[i].transpose();
  return m;
}

}  // namespace detail

/// Non-rigid registration on a prepared graph from a given initial state.
/// Both surfaces are expected in the normalized frame.
inline RegistrationResult register_with_graph(const Surface& source, const Surface& target, DeformationGraph graph,
                                              const TransformState& initial, const SolverParams& params) {
  params.validate();
  if (graph.node_count() == 0) throw InvalidInput("register: deformation graph is empty");
  if (initial.node_count() != graph.node_count()) throw InvalidInput("register: initial state size mismatch");
  if (target.vertices.empty()) throw InvalidInput("register: empty target");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    if (!params.record_timing) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  RegistrationResult result;
  result.mean_edge_length = mean_edge_length(source);
  const double lbar = result.mean_edge_length;
  const auto model = build_linear_model(graph, source.vertices);
  const KdTree index(target.vertices);
  const int n = static_cast<int>(source.vertices.size());

  Eigen::MatrixX3d x = initial.X;
  Eigen::MatrixX3d moved = model->F * x + model->P;
  Points moved_pts = detail::rows_to_points(moved);

  // d-bar: median distance of the pairs that pass rejection at the initial state.
  {
    const bool angle_test = params.icp.max_angle_deg < 180.0 && source.has_normals() && target.has_normals();
    Points moved_normals;
    if (angle_test) {
      moved_normals.resize(n);
      const TransformState st(x);
      for (int i = 0; i < n; ++i) {
        Mat3 a = Mat3::Zero();
        for (const InfluenceWeight& iw : graph.influence[i]) a += iw.weight * st.affine(iw.node);
        const Vec3 nv = a * source.normals[i];
        moved_normals[i] = nv.norm() > 0 ? Vec3(nv.normalized()) : source.normals[i];
      }
    }
    const CorrespondenceSet c0 = find_correspondences(
        moved_pts, target, index,
        Rejection{params.icp.max_distance, angle_test ? params.icp.max_angle_deg : 180.0, moved_normals});
    std::vector<double> valid;
    for (int i = 0; i < n; ++i)
      if (c0.valid[i]) valid.push_back(c0.distance[i]);
    result.median_initial_distance = valid.empty() ? median(c0.distance) : median(valid);
  }

  const double nu_a_min = params.nu_a_min_factor * lbar;
  const double nu_a_max = std::max(params.nu_a_max_factor * result.median_initial_distance, nu_a_min);
  const double nu_r_max = params.nu_r_max_factor * lbar;

  EnergyParams ep;
  ep.kernel = params.kernel;
  ep.alpha = graph.edge_count() > 0 ? params.k_alpha * n / static_cast<double>(graph.edge_count()) : 0.0;
  ep.beta = params.k_beta * n / static_cast<double>(graph.node_count());
  ep.nu_a = nu_a_max;
  ep.nu_r = nu_r_max;
  double stop_nu_a = nu_a_min;
  if (params.fixed_nu) {
    const int stages = annealing_stage_count(nu_a_max, nu_a_min);
    ep.nu_a = nu_a_min;
    ep.nu_r = nu_r_max * std::pow(0.5, stages - 1);
  }

  H0Factorization factor(params.reuse_symbolic);
  CorrespondenceSet corr = find_correspondences(moved_pts, target, index);
  for (int stage = 0;; ++stage) {
    StageReport rep;
    rep.nu_a = ep.nu_a;
    rep.nu_r = ep.nu_r;
    Eigen::MatrixX3d u = detail::points_to_rows(corr.target_position);
    rep.initial_energy = model_energy(*model, x, u, ep);

    for (int k = 0;;) {
      const SurrogateSystem sys = assemble_surrogate(model, TransformState(x), corr, ep);
      InnerReport inner;
      Eigen::MatrixX3d x_next = solve_inner(sys, x, params, factor, &inner);
      const Eigen::MatrixX3d moved_next = model->F * x_next + model->P;
      const double max_disp = (moved_next - moved).rowwise().norm().maxCoeff();
      x = std::move(x_next);
      moved = moved_next;
      moved_pts = detail::rows_to_points(moved);
      corr = find_correspondences(moved_pts, target, index);
      u = detail::points_to_rows(corr.target_position);
      ++k;
      result.trace.push_back({stage, k, ep.nu_a, ep.nu_r, model_energy(*model, x, u, ep), max_disp, elapsed()});
      rep.inner.push_back(std::move(inner));
      rep.iterations = k;
      if (max_disp < params.eps2) {
        rep.termination = Termination::converged;
        break;
      }
      if (k == params.max_outer) {
        rep.termination = Termination::max_iterations;
        break;
      }
    }
    result.stages.push_back(std::move(rep));
    if (params.fixed_nu || ep.nu_a == stop_nu_a) break;
    ep.nu_a = std::max(0.5 * ep.nu_a, nu_a_min);
    ep.nu_r = 0.5 * ep.nu_r;
  }

  result.final_state = TransformState(x);
  result.transformed_source = moved_pts;
  result.graph = std::move(graph);
  result.final_params = ep;
  result.symbolic_factorizations = factor.symbolic_count();
  return result;
}

/// Full pipeline on normalized surfaces: graph, rigid ICP, lift, then MM.
inline RegistrationResult register_surfaces(const Surface& source, const Surface& target, const SolverParams& params = {}) {
  params.validate();
  if (source.vertices.empty() || target.vertices.empty()) throw InvalidInput("register: empty surface");
  const double lbar = mean_edge_length(source);
  DeformationGraph graph = build_graph(source, params.radius_factor * lbar, params.sampler, params.edge_radius_factor);
  RigidTransform rigid;
  if (params.rigid_init) rigid = rigid_icp_init(source, target, params.icp);
  const TransformState x0 = lift_rigid_to_state(rigid, graph);
  RegistrationResult res = register_with_graph(source, target, std::move(graph), x0, params);
  res.rigid = rigid;
  return res;
}

inline void write_trace_csv(std::span<const TraceRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "stage,outer_iter,nu_a,nu_r,energy,max_disp,elapsed_seconds\n";
  for (const TraceRow& r : rows)
    out << r.stage << ',' << r.outer_iter << ',' << detail::format_double(r.nu_a) << ','
        << detail::format_double(r.nu_r) << ',' << detail::format_double(r.energy) << ','
        << detail::format_double(r.max_disp) << ',' << detail::format_double(r.elapsed_seconds) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace rnrr
