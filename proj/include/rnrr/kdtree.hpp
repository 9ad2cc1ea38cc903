#pragma once

#include "rnrr/common.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace rnrr {

struct Neighbor {
  int index = -1;
  double squared_distance = std::numeric_limits<double>::infinity();
};

/// Exact nearest-neighbour index over a fixed 3D point set.
///
/// Ties between equidistant points are broken toward the lowest index, so
/// queries are deterministic and agree with a brute-force scan.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw InvalidInput("spatial index needs at least one point");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(order_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(int i) const { return points_[i]; }

  Neighbor nearest(const Vec3& q) const {
    Neighbor best;
    nearest_recursive(0, q, best);
    return best;
  }

  /// k nearest points sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& q, int k) const {
    std::vector<Neighbor> heap;
    k = std::min<int>(k, static_cast<int>(points_.size()));
    if (k <= 0) return heap;
    heap.reserve(k + 1);
    knn_recursive(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end(), neighbor_less);
    return heap;
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    int begin = 0, end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  static bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
    return a.index < b.index;
  }

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  // Left subtree holds coordinates <= split, right subtree >= split.
  void nearest_recursive(int id, const Vec3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const Neighbor cand{order_[i], (points_[order_[i]] - q).squaredNorm()};
        if (best.index < 0 || neighbor_less(cand, best)) best = cand;
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff <= 0.0 ? n.left : n.right;
    const int second = diff <= 0.0 ? n.right : n.left;
    nearest_recursive(first, q, best);
    if (diff * diff <= best.squared_distance) nearest_recursive(second, q, best);
  }

  void knn_recursive(int id, const Vec3& q, int k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const Neighbor cand{order_[i], (points_[order_[i]] - q).squaredNorm()};
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), neighbor_less);
        } else if (neighbor_less(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), neighbor_less);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), neighbor_less);
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff <= 0.0 ? n.left : n.right;
    const int second = diff <= 0.0 ? n.right : n.left;
    knn_recursive(first, q, k, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().squared_distance)
      knn_recursive(second, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace rnrr
