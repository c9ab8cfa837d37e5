#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gmmcd/kdtree.hpp"
#include "gmmcd/parallel.hpp"
#include "gmmcd/point_cloud.hpp"

namespace gmmcd {

/// Preprocessing parameters; every field strictly positive.
struct FilterParams {
  double voxel_size = 0.05;     // meters
  int sor_neighbors = 50;       // k for the outlier filter
  double sor_stddev_mult = 1.0; // threshold multiplier

  void validate() const {
    if (!(voxel_size > 0)) throw Error("FilterParams: voxel_size must be > 0");
    if (sor_neighbors < 1) throw Error("FilterParams: sor_neighbors must be >= 1");
    if (!(sor_stddev_mult > 0)) throw Error("FilterParams: sor_stddev_mult must be > 0");
  }
};

namespace detail {
struct VoxelKeyHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : k) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};
}  // namespace detail

/// Voxel grid downsample: space is partitioned into an axis-aligned grid of
/// cells `voxel_size` wide anchored at `anchor`, and each occupied cell
/// contributes the centroid of its members. Output cells appear in order of
/// first member occurrence. When downsampling a scan pair, pass the min corner
/// of the union bounding box as the anchor for both clouds so they share one
/// grid.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size,
                                   const std::optional<Vec>& anchor = std::nullopt) {
  if (!(voxel_size > 0)) throw Error("voxel_downsample: voxel_size must be > 0");
  if (cloud.empty()) return cloud;
  const int dim = cloud.dim();
  Vec origin = anchor ? *anchor : Vec(cloud.points.colwise().minCoeff().transpose());
  if (static_cast<int>(origin.size()) != dim)
    throw Error("voxel_downsample: anchor dim does not match cloud dim");

  struct Slot {
    Vec sum;
    std::size_t count = 0;
  };
  std::unordered_map<std::array<std::int64_t, 3>, std::size_t, detail::VoxelKeyHash> index;
  std::vector<Slot> slots;
  index.reserve(cloud.size());

  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    std::array<std::int64_t, 3> key{0, 0, 0};
    for (int d = 0; d < dim; ++d) {
      key[d] = static_cast<std::int64_t>(std::floor((cloud.points(i, d) - origin[d]) / voxel_size));
    }
    auto [it, fresh] = index.try_emplace(key, slots.size());
    if (fresh) slots.push_back(Slot{Vec::Zero(dim), 0});
    Slot& slot = slots[it->second];
    slot.sum += cloud.points.row(i).transpose();
    slot.count += 1;
  }

  Mat out(static_cast<Eigen::Index>(slots.size()), dim);
  for (std::size_t s = 0; s < slots.size(); ++s) {
    out.row(static_cast<Eigen::Index>(s)) = (slots[s].sum / static_cast<double>(slots[s].count)).transpose();
  }
  return PointCloud(std::move(out), cloud.frame_id);
}

/// Statistical outlier removal: each point's mean distance to its k nearest
/// neighbors is compared against (global mean + stddev_mult * global sample
/// stddev) of those per-point means, and points strictly above the threshold
/// are dropped. Survivor order is preserved. A cloud with <= k points is
/// returned unchanged and `undersized`, when given, is set.
inline PointCloud statistical_outlier_removal(const PointCloud& cloud, int neighbors,
                                              double stddev_mult, bool* undersized = nullptr) {
  if (neighbors < 1) throw Error("statistical_outlier_removal: neighbors must be >= 1");
  if (undersized) *undersized = false;
  if (cloud.size() <= static_cast<std::size_t>(neighbors)) {
    if (undersized) *undersized = true;
    return cloud;
  }

  const std::size_t n = cloud.size();
  const KdTree tree(cloud.points);
  std::vector<double> mean_dist(n);
  parallel_chunks(n, 512, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto nn = tree.knn(cloud.point(i), static_cast<std::size_t>(neighbors), i);
      double sum = 0;
      for (const auto& nb : nn) sum += std::sqrt(nb.dist2);
      mean_dist[i] = sum / static_cast<double>(nn.size());
    }
  });

  double sum = 0;
  for (double m : mean_dist) sum += m;
  const double mean = sum / static_cast<double>(n);
  double sq = 0;
  for (double m : mean_dist) sq += (m - mean) * (m - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(n - 1));
  const double threshold = mean + stddev_mult * stddev;

  std::vector<Eigen::Index> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_dist[i] <= threshold) keep.push_back(static_cast<Eigen::Index>(i));
  }
  Mat out(static_cast<Eigen::Index>(keep.size()), cloud.dim());
  for (std::size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = cloud.points.row(keep[r]);
  return PointCloud(std::move(out), cloud.frame_id);
}

}  // namespace gmmcd
