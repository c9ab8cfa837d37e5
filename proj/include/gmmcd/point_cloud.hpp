#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "gmmcd/common.hpp"

namespace gmmcd {

/// An ordered set of D-dimensional points (meters), one per row.
/// D is 2 or 3; every coordinate is finite.
struct PointCloud {
  Mat points;            // N x D, one point per row
  std::string frame_id;  // optional tag, empty when unset

  PointCloud() : points(0, 3) {}
  explicit PointCloud(Mat pts, std::string frame = {})
      : points(std::move(pts)), frame_id(std::move(frame)) {}

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  bool empty() const { return points.rows() == 0; }

  Vec point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)); }
};

/// Build a cloud from an explicit point list; all points must share one dim.
inline PointCloud make_cloud(const std::vector<Vec>& pts, int dim = 3) {
  if (!pts.empty()) dim = static_cast<int>(pts.front().size());
  Mat m(static_cast<Eigen::Index>(pts.size()), dim);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (static_cast<int>(pts[i].size()) != dim) throw Error("make_cloud: inconsistent point dims");
    m.row(static_cast<Eigen::Index>(i)) = pts[i];
  }
  return PointCloud(std::move(m));
}

/// Centroid of a non-empty cloud.
inline Vec centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("centroid: empty cloud");
  return cloud.points.colwise().mean();
}

/// Population covariance (divide by N) of a non-empty cloud.
inline Mat population_covariance(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("population_covariance: empty cloud");
  const Vec mu = centroid(cloud);
  Mat centered = cloud.points.rowwise() - mu.transpose();
  return (centered.transpose() * centered) / static_cast<double>(cloud.size());
}

/// Sample covariance (divide by N-1); needs at least two points.
inline Mat sample_covariance(const PointCloud& cloud) {
  if (cloud.size() < 2) throw Error("sample_covariance: needs at least 2 points");
  const Vec mu = centroid(cloud);
  Mat centered = cloud.points.rowwise() - mu.transpose();
  return (centered.transpose() * centered) / static_cast<double>(cloud.size() - 1);
}

/// Tight bounding box of a non-empty cloud.
inline Aabb bounds(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("bounds: empty cloud");
  return Aabb{cloud.points.colwise().minCoeff(), cloud.points.colwise().maxCoeff()};
}

/// Retain the points inside the closed box [min_corner, max_corner].
inline PointCloud crop_aabb(const PointCloud& cloud, const Vec& min_corner, const Vec& max_corner) {
  if (min_corner.size() != max_corner.size()) throw Error("crop_aabb: corner dims differ");
  if (static_cast<int>(min_corner.size()) != cloud.dim())
    throw Error("crop_aabb: box dim does not match cloud dim");
  for (int d = 0; d < cloud.dim(); ++d) {
    if (min_corner[d] > max_corner[d]) throw Error("crop_aabb: min_corner exceeds max_corner");
  }

  std::vector<Eigen::Index> keep;
  keep.reserve(cloud.size());
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    bool inside = true;
    for (int d = 0; d < cloud.dim(); ++d) {
      const double x = cloud.points(i, d);
      if (x < min_corner[d] || x > max_corner[d]) {
        inside = false;
        break;
      }
    }
    if (inside) keep.push_back(i);
  }

  Mat out(static_cast<Eigen::Index>(keep.size()), cloud.dim());
  for (std::size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = cloud.points.row(keep[r]);
  return PointCloud(std::move(out), cloud.frame_id);
}

}  // namespace gmmcd
