#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gmmcd/common.hpp"
#include "gmmcd/gmm.hpp"

namespace gmmcd {

enum class RegionKind { appeared, disappeared };

inline const char* to_string(RegionKind kind) {
  return kind == RegionKind::appeared ? "appeared" : "disappeared";
}

/// Axis-aligned box around an object that is present in exactly one of the
/// two scenes, in world coordinates.
struct GroundTruthRegion {
  std::string name;
  RegionKind kind = RegionKind::appeared;
  Aabb aabb;
};

struct ConfusionCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;

  int total() const { return tp + fp + fn + tn; }
};

/// Component-level confusion counts. A component matches a region when its
/// mean lies inside the region's box inflated on every side by
/// inflation_scale times the square root of the covariance's largest
/// eigenvalue (a one-standard-deviation margin by default; zero demands the
/// mean strictly inside the box). Extracted components that match some
/// region are true positives, extracted without a match false positives;
/// the remaining components count as false negatives when they match a
/// region and true negatives otherwise. Callers should pass only the
/// regions whose kind matches the detection mode.
inline ConfusionCounts classify_components(const MixtureModel& mined_model,
                                           const std::vector<int>& extracted_indices,
                                           const std::vector<GroundTruthRegion>& regions,
                                           double inflation_scale = 1.0) {
  mined_model.validate();
  if (inflation_scale < 0.0) throw Error("classify_components: negative inflation_scale");
  std::vector<char> in_pi(mined_model.size(), 0);
  for (const int k : extracted_indices) {
    if (k < 0 || k >= mined_model.size())
      throw Error("classify_components: extracted index out of range");
    in_pi[k] = 1;
  }

  ConfusionCounts counts;
  for (int k = 0; k < mined_model.size(); ++k) {
    const GaussianComponent& c = mined_model.components[k];
    Eigen::SelfAdjointEigenSolver<Mat> eig(c.covariance);
    const double spread =
        std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff())) * inflation_scale;
    bool matched = false;
    for (const GroundTruthRegion& region : regions) {
      if (region.aabb.contains_inflated(c.mean, spread)) {
        matched = true;
        break;
      }
    }
    if (in_pi[k]) {
      (matched ? counts.tp : counts.fp) += 1;
    } else {
      (matched ? counts.fn : counts.tn) += 1;
    }
  }
  return counts;
}

/// Accuracy, precision, recall, and F1. A metric whose denominator is zero
/// is left empty rather than defaulted.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

inline Metrics compute_metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
    throw Error("compute_metrics: negative count");
  Metrics m;
  if (c.total() > 0)
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp > 0)
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0)
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  return m;
}

}  // namespace gmmcd
