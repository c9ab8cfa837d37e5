#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "gmmcd/point_cloud.hpp"

namespace gmmcd {

/// Exact k-nearest-neighbor search over a fixed cloud. Results are ordered by
/// (distance, point index), so equal-distance ties resolve to the lower index
/// and queries match a brute-force scan bit for bit.
class KdTree {
 public:
  explicit KdTree(const Mat& points) : pts_(points), dim_(static_cast<int>(points.cols())) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    nodes_.reserve(n);
    if (n > 0) root_ = build(0, n, 0);
  }

  struct Neighbor {
    double dist2;
    std::size_t index;
    bool operator<(const Neighbor& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };

  /// k nearest neighbors of `query`, optionally excluding one index (the
  /// query point itself). Returns fewer than k when the cloud is small.
  std::vector<Neighbor> knn(const Vec& query, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const {
    std::vector<Neighbor> heap;  // max-heap on (dist2, index)
    heap.reserve(k + 1);
    if (root_ >= 0 && k > 0) search(root_, query, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    std::size_t index;
    int axis;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % dim_;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double xa = pts_(static_cast<Eigen::Index>(a), axis);
                       const double xb = pts_(static_cast<Eigen::Index>(b), axis);
                       return xa < xb || (xa == xb && a < b);
                     });
    Node node;
    node.index = order_[mid];
    node.axis = axis;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid + 1, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int id, const Vec& query, std::size_t k, std::size_t exclude,
              std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    if (node.index != exclude) {
      double d2 = 0;
      for (int a = 0; a < dim_; ++a) {
        const double diff = pts_(static_cast<Eigen::Index>(node.index), a) - query[a];
        d2 += diff * diff;
      }
      const Neighbor cand{d2, node.index};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }

    const double delta = query[node.axis] - pts_(static_cast<Eigen::Index>(node.index), node.axis);
    const int near = delta < 0 ? node.left : node.right;
    const int far = delta < 0 ? node.right : node.left;
    if (near >= 0) search(near, query, k, exclude, heap);
    // Equal axis distance may still hide an equal-distance lower-index point,
    // so only a strictly greater bound prunes the far side.
    if (far >= 0 && (heap.size() < k || delta * delta <= heap.front().dist2)) {
      search(far, query, k, exclude, heap);
    }
  }

  const Mat& pts_;
  int dim_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace gmmcd
