#pragma once

#include <Eigen/Eigenvalues>

#include <vector>

#include "gmmcd/point_cloud.hpp"

namespace gmmcd {

/// Linear projection onto the top principal directions of a point set.
/// Rows of `basis` are orthonormal; `explained_variance` is non-increasing.
struct PcaTransform {
  Vec mean;                // source-space D-vector
  Mat basis;               // target_dim x D, orthonormal rows
  Vec explained_variance;  // target_dim eigenvalues, non-increasing

  int source_dim() const { return static_cast<int>(basis.cols()); }
  int target_dim() const { return static_cast<int>(basis.rows()); }
};

/// Fit a PCA transform on the concatenation of the input clouds, so that every
/// cloud projected with the result shares one coordinate frame. The basis rows
/// are the top target_dim eigenvectors of the combined sample covariance;
/// signs are fixed so each row's largest-magnitude entry is positive.
/// Rank-deficient data (numerical rank below target_dim) is an error naming
/// the achieved rank.
inline PcaTransform pca_fit(const std::vector<PointCloud>& clouds, int target_dim) {
  if (clouds.empty()) throw Error("pca_fit: no input clouds");
  const int dim = clouds.front().dim();
  std::size_t total = 0;
  for (const auto& c : clouds) {
    if (c.dim() != dim) throw Error("pca_fit: input clouds disagree on dim");
    total += c.size();
  }
  if (target_dim < 1 || target_dim > dim)
    throw Error("pca_fit: target_dim must be in [1, source dim]");
  if (total < static_cast<std::size_t>(dim) + 1)
    throw Error("pca_fit: needs at least dim+1 combined points");

  Mat all(static_cast<Eigen::Index>(total), dim);
  Eigen::Index row = 0;
  for (const auto& c : clouds) {
    all.middleRows(row, c.points.rows()) = c.points;
    row += c.points.rows();
  }

  const Vec mean = all.colwise().mean();
  Mat centered = all.rowwise() - mean.transpose();
  const Mat cov = (centered.transpose() * centered) / static_cast<double>(total - 1);

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");
  // Eigen returns ascending eigenvalues; flip to non-increasing.
  Vec values(dim);
  Mat vectors(dim, dim);
  for (int d = 0; d < dim; ++d) {
    values[d] = eig.eigenvalues()[dim - 1 - d];
    vectors.col(d) = eig.eigenvectors().col(dim - 1 - d);
  }

  const double rank_tol = std::max(values[0], 0.0) * 1e-12;
  int rank = 0;
  for (int d = 0; d < dim; ++d) {
    if (values[d] > rank_tol && values[d] > 0) ++rank;
  }
  if (rank < target_dim)
    throw Error("pca_fit: target_dim " + std::to_string(target_dim) +
                " exceeds numerical rank " + std::to_string(rank));

  PcaTransform t;
  t.mean = mean;
  t.basis = Mat(target_dim, dim);
  t.explained_variance = Vec(target_dim);
  for (int d = 0; d < target_dim; ++d) {
    Vec v = vectors.col(d);
    int big = 0;
    for (int j = 1; j < dim; ++j) {
      if (std::abs(v[j]) > std::abs(v[big])) big = j;
    }
    if (v[big] < 0) v = -v;
    t.basis.row(d) = v.transpose();
    t.explained_variance[d] = values[d];
  }
  return t;
}

inline PcaTransform pca_fit(const PointCloud& cloud, int target_dim) {
  return pca_fit(std::vector<PointCloud>{cloud}, target_dim);
}

/// Project a cloud: each output point is basis * (point - mean).
inline PointCloud pca_apply(const PcaTransform& transform, const PointCloud& cloud) {
  if (cloud.dim() != transform.source_dim())
    throw Error("pca_apply: cloud dim does not match transform source dim");
  Mat centered = cloud.points.rowwise() - transform.mean.transpose();
  Mat out = centered * transform.basis.transpose();
  return PointCloud(std::move(out), cloud.frame_id);
}

/// Lift a projected point back to the source space (lies on the PCA plane).
inline Vec pca_lift(const PcaTransform& transform, const Vec& p) {
  if (static_cast<int>(p.size()) != transform.target_dim())
    throw Error("pca_lift: point dim does not match transform target dim");
  return transform.basis.transpose() * p + transform.mean;
}

}  // namespace gmmcd
