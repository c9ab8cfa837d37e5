#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace gmmcd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Error type thrown by every operation in this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Closed axis-aligned box, componentwise min_corner <= max_corner.
struct Aabb {
  Vec min_corner;
  Vec max_corner;

  int dim() const { return static_cast<int>(min_corner.size()); }

  bool contains(const Vec& p) const {
    for (int d = 0; d < dim(); ++d) {
      if (p[d] < min_corner[d] || p[d] > max_corner[d]) return false;
    }
    return true;
  }

  /// Membership test against the box grown by `radius` on every face.
  bool contains_inflated(const Vec& p, double radius) const {
    for (int d = 0; d < dim(); ++d) {
      if (p[d] < min_corner[d] - radius || p[d] > max_corner[d] + radius) return false;
    }
    return true;
  }

  Vec center() const { return 0.5 * (min_corner + max_corner); }
  Vec extent() const { return max_corner - min_corner; }
};

}  // namespace gmmcd
