#pragma once

// Limited-memory BFGS building blocks over matrix-valued variables.
// Inner products are trace(A^T B), i.e. the Frobenius product.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <deque>
#include <utility>
#include <vector>

namespace rnrr {

template <typename Matrix>
double frobenius_dot(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

/// Ring buffer of the last m (S, T, rho) curvature pairs.
template <typename Matrix>
class LbfgsHistory {
 public:
  struct Pair {
    Matrix s;
    Matrix t;
    double rho;
  };

  explicit LbfgsHistory(std::size_t capacity = 5) : capacity_(capacity) {}

  /// Stores the pair unless trace(T^T S) <= 1e-12 |S| |T|. Returns whether it was kept.
  bool push(Matrix s, Matrix t) {
    const double rho = frobenius_dot(t, s);
    if (!(rho > 1e-12 * s.norm() * t.norm())) return false;
    if (capacity_ == 0) return false;
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back({std::move(s), std::move(t), rho});
    return true;
  }

  void clear() { pairs_.clear(); }
  std::size_t size() const { return pairs_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Pair& operator[](std::size_t i) const { return pairs_[i]; }  // 0 = oldest

 private:
  std::size_t capacity_;
  std::deque<Pair> pairs_;
};

/// Two-loop recursion: returns d = -H G, where H is the L-BFGS inverse
/// Hessian built on top of h0_solve (which applies H0^{-1}).
template <typename Matrix, typename H0Solve>
Matrix two_loop_direction(const LbfgsHistory<Matrix>& hist, const Matrix& grad, H0Solve&& h0_solve) {
  const std::size_t m = hist.size();
  std::vector<double> xi(m);
  Matrix q = -grad;
  for (std::size_t k = m; k-- > 0;) {
    const auto& p = hist[k];
    xi[k] = frobenius_dot(p.s, q) / p.rho;
    q -= xi[k] * p.t;
  }
  Matrix r = h0_solve(q);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& p = hist[k];
    const double eta = frobenius_dot(p.t, r) / p.rho;
    r += (xi[k] - eta) * p.s;
  }
  return r;
}

template <typename Matrix>
struct LineSearchResult {
  bool accepted = false;
  double step = 0.0;
  Matrix x;
  double energy = 0.0;
  int evaluations = 0;
};

/// Backtracking from step 1, halving until
///   f(x + s d) <= f(x) + gamma * s * trace(G^T d).
template <typename Matrix, typename Energy>
LineSearchResult<Matrix> line_search(Energy&& energy, const Matrix& x, double fx, const Matrix& d, const Matrix& grad,
                                     double gamma, double min_step = 1e-12) {
  const double slope = frobenius_dot(grad, d);
  LineSearchResult<Matrix> res;
  for (double step = 1.0; step >= min_step; step *= 0.5) {
    Matrix cand = x + step * d;
    const double fc = energy(cand);
    ++res.evaluations;
    if (fc <= fx + gamma * step * slope) {
      res.accepted = true;
      res.step = step;
      res.x = std::move(cand);
      res.energy = fc;
      return res;
    }
  }
  res.x = x;
  res.energy = fx;
  return res;
}

}  // namespace rnrr
