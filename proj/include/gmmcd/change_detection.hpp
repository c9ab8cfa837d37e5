#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gmmcd/common.hpp"
#include "gmmcd/filters.hpp"
#include "gmmcd/gmm.hpp"
#include "gmmcd/parallel.hpp"
#include "gmmcd/pca.hpp"
#include "gmmcd/point_cloud.hpp"
#include "gmmcd/transport.hpp"

namespace gmmcd {

enum class DetectionMode { appear, disappear };

inline const char* to_string(DetectionMode mode) {
  return mode == DetectionMode::appear ? "appear" : "disappear";
}

struct DetectionConfig {
  DetectionMode mode = DetectionMode::appear;
  int min_extractions = 0;
  int max_extractions = -1;  // -1: resolved to the mined model's component count
  // Rescale the remaining weights to unit mass when scoring a candidate
  // removal. Without rescaling the smaller-total side is only partially
  // matched, which makes removing any above-average-cost component always
  // look like an improvement, and the greedy loop strips the model down to
  // one component on any noisy input.
  bool renormalize = true;

  void validate() const {
    if (min_extractions < 0) throw Error("DetectionConfig: min_extractions must be >= 0");
    if (max_extractions >= 0 && min_extractions > max_extractions)
      throw Error("DetectionConfig: min_extractions exceeds max_extractions");
  }
};

/// Result of the greedy extraction: the components moved into Π, their
/// indices in the mined model, and the EMD after each step (index 0 is the
/// EMD between the full models). With min_extractions = 0 the trace is
/// strictly decreasing past index 0; forced extractions may break that.
struct ChangeModel {
  std::vector<GaussianComponent> extracted;
  std::vector<int> source_indices;
  std::vector<double> emd_trace;
};

/// Mean/weight signature of a mixture.
inline Signature signature_of(const MixtureModel& model) {
  Signature s;
  s.positions = Mat(model.size(), model.dim);
  s.masses = Vec(model.size());
  for (int k = 0; k < model.size(); ++k) {
    s.positions.row(k) = model.components[k].mean.transpose();
    s.masses[k] = model.components[k].weight;
  }
  return s;
}

namespace detail {

inline Signature subset_signature(const MixtureModel& model, const std::vector<int>& live,
                                  int skip, bool renormalize) {
  const int n = static_cast<int>(live.size()) - (skip >= 0 ? 1 : 0);
  Signature s;
  s.positions = Mat(n, model.dim);
  s.masses = Vec(n);
  int r = 0;
  for (const int k : live) {
    if (k == skip) continue;
    s.positions.row(r) = model.components[k].mean.transpose();
    s.masses[r] = model.components[k].weight;
    ++r;
  }
  if (renormalize) s.masses /= s.masses.sum();
  return s;
}

}  // namespace detail

/// Greedy extraction: repeatedly remove the component of the mined model
/// whose removal lowers the EMD to the reference model the most, while the
/// best removal still lowers it by more than 1e-9 (ties to the lowest
/// component index). In appear mode the mined model is theta_t; disappear
/// mode swaps the roles and mines theta_t0. Stops at one remaining
/// component or at max_extractions; min_extractions forces that many
/// extractions regardless of improvement.
inline ChangeModel detect_changes(const MixtureModel& theta_t0, const MixtureModel& theta_t,
                                  const DetectionConfig& config) {
  config.validate();
  theta_t0.validate();
  theta_t.validate();
  if (theta_t0.dim != theta_t.dim) throw Error("detect_changes: model dims differ");

  const MixtureModel& reference =
      config.mode == DetectionMode::appear ? theta_t0 : theta_t;
  const MixtureModel& mined = config.mode == DetectionMode::appear ? theta_t : theta_t0;

  const Signature ref_sig = signature_of(reference);
  std::vector<int> live(mined.size());
  for (int k = 0; k < mined.size(); ++k) live[k] = k;

  const int max_extractions =
      config.max_extractions < 0 ? mined.size() : config.max_extractions;

  ChangeModel change;
  change.emd_trace.push_back(
      emd(ref_sig, detail::subset_signature(mined, live, -1, config.renormalize)));

  while (static_cast<int>(change.extracted.size()) < max_extractions && live.size() > 1) {
    // Candidate removals are independent; evaluate them in parallel and pick
    // the winner in index order so the result is thread-count independent.
    std::vector<double> candidate_emd(live.size());
    parallel_chunks(live.size(), 1, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        candidate_emd[c] = emd(
            ref_sig, detail::subset_signature(mined, live, live[c], config.renormalize));
      }
    });
    std::size_t best = 0;
    for (std::size_t c = 1; c < live.size(); ++c) {
      if (candidate_emd[c] < candidate_emd[best]) best = c;
    }

    const bool forced =
        static_cast<int>(change.extracted.size()) < config.min_extractions;
    if (!forced && !(candidate_emd[best] < change.emd_trace.back() - 1e-9)) break;

    change.extracted.push_back(mined.components[live[best]]);
    change.source_indices.push_back(live[best]);
    change.emd_trace.push_back(candidate_emd[best]);
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return change;
}

/// Per-point labels: a point is `changed` (1) iff its maximum-responsibility
/// component under the full mined model is in Π. Responsibility ties resolve
/// to the lowest component index.
inline std::vector<std::uint8_t> label_points(const PointCloud& cloud,
                                              const MixtureModel& model,
                                              const ChangeModel& change) {
  if (cloud.dim() != model.dim) throw Error("label_points: cloud and model dims differ");
  std::vector<char> in_pi(model.size(), 0);
  for (const int k : change.source_indices) in_pi[k] = 1;
  std::vector<std::uint8_t> labels(cloud.size(), 0);
  if (cloud.empty()) return labels;
  const Mat w = e_step(model, cloud);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Eigen::Index arg = 0;
    w.row(i).maxCoeff(&arg);
    labels[static_cast<std::size_t>(i)] = in_pi[arg] ? 1 : 0;
  }
  return labels;
}

struct StageTimings {
  double data_loading_ms = 0.0;
  double filtering_ms = 0.0;
  double pca_ms = 0.0;
  double em_ms = 0.0;
  double emd_ms = 0.0;
  double total_ms = 0.0;
};

/// Full pipeline output. `mined_model`, `extracted`, and `labels` describe
/// the model that was searched for changes: theta_t in appear mode, theta_t0
/// in disappear mode. When PCA is enabled the mixtures are fit in the
/// projected plane; reported means and covariances are lifted back to world
/// coordinates (covariances become rank-deficient and serve reporting and
/// evaluation, not density evaluation).
struct DetectionReport {
  DetectionMode mode = DetectionMode::appear;
  int k_star_t0 = 0;
  int k_star_t = 0;
  double initial_emd = 0.0;
  std::vector<double> emd_trace;
  std::vector<GaussianComponent> extracted;
  std::vector<int> source_indices;
  MixtureModel mined_model;
  std::vector<std::uint8_t> labels;  // aligned with mined_cloud
  PointCloud mined_cloud;            // filtered world-frame cloud the labels apply to
  StageTimings timings;
  EmConfig em;
  DetectionConfig detection;
  FilterParams filters;
  bool use_pca = false;
  std::optional<PcaTransform> pca;
  std::vector<std::string> warnings;

  bool change_detected() const { return !extracted.empty(); }
};

namespace detail {

inline GaussianComponent lift_component(const PcaTransform& t, const GaussianComponent& c) {
  GaussianComponent out;
  out.weight = c.weight;
  out.mean = pca_lift(t, c.mean);
  out.covariance = t.basis.transpose() * c.covariance * t.basis;
  return out;
}

inline MixtureModel lift_model(const PcaTransform& t, const MixtureModel& model) {
  MixtureModel out;
  out.dim = t.source_dim();
  out.components.reserve(model.components.size());
  for (const auto& c : model.components) out.components.push_back(lift_component(t, c));
  return out;
}

}  // namespace detail

/// Outlier removal, pair-consistent voxel downsampling, optional joint PCA to
/// two dimensions, one mixture fit per cloud (same seed), greedy extraction,
/// and per-point labeling. Passing both pre-fit models skips the fitting
/// stage; they must live in the input frame, so PCA cannot be combined with
/// them.
inline DetectionReport run_pipeline(const PointCloud& cloud_t0, const PointCloud& cloud_t,
                                    const EmConfig& em, const DetectionConfig& det,
                                    const FilterParams& filters, bool use_pca,
                                    const MixtureModel* prefit_t0 = nullptr,
                                    const MixtureModel* prefit_t = nullptr) {
  using Clock = std::chrono::steady_clock;
  const auto ms_since = [](Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };
  em.validate();
  det.validate();
  filters.validate();
  if (cloud_t0.empty() || cloud_t.empty()) throw Error("run_pipeline: empty input cloud");
  if (cloud_t0.dim() != cloud_t.dim()) throw Error("run_pipeline: input dims differ");
  if ((prefit_t0 == nullptr) != (prefit_t == nullptr))
    throw Error("run_pipeline: pre-fit models must be given for both instants");
  if (prefit_t0 && use_pca)
    throw Error("run_pipeline: pre-fit models are in the input frame and exclude PCA");
  if (prefit_t0) {
    prefit_t0->validate();
    prefit_t->validate();
    if (prefit_t0->dim != cloud_t0.dim() || prefit_t->dim != cloud_t.dim())
      throw Error("run_pipeline: pre-fit model dim does not match the clouds");
  }

  DetectionReport report;
  report.mode = det.mode;
  report.em = em;
  report.detection = det;
  report.filters = filters;
  report.use_pca = use_pca;
  const auto t_total = Clock::now();

  // Outlier removal, then one voxel grid anchored at the pair's combined
  // minimum corner so both clouds share cell boundaries.
  auto t_stage = Clock::now();
  bool undersized_t0 = false, undersized_t = false;
  PointCloud filtered_t0 = statistical_outlier_removal(
      cloud_t0, filters.sor_neighbors, filters.sor_stddev_mult, &undersized_t0);
  PointCloud filtered_t = statistical_outlier_removal(
      cloud_t, filters.sor_neighbors, filters.sor_stddev_mult, &undersized_t);
  if (undersized_t0 || undersized_t)
    report.warnings.push_back("outlier removal skipped: cloud not larger than neighbor count");
  const Aabb b0 = bounds(filtered_t0);
  const Aabb b1 = bounds(filtered_t);
  const Vec anchor = b0.min_corner.cwiseMin(b1.min_corner);
  filtered_t0 = voxel_downsample(filtered_t0, filters.voxel_size, anchor);
  filtered_t = voxel_downsample(filtered_t, filters.voxel_size, anchor);
  report.timings.filtering_ms = ms_since(t_stage);

  PointCloud fit_t0 = filtered_t0;
  PointCloud fit_t = filtered_t;
  if (use_pca) {
    t_stage = Clock::now();
    report.pca = pca_fit(std::vector<PointCloud>{filtered_t0, filtered_t}, 2);
    fit_t0 = pca_apply(*report.pca, filtered_t0);
    fit_t = pca_apply(*report.pca, filtered_t);
    report.timings.pca_ms = ms_since(t_stage);
  }

  MixtureModel model_t0, model_t;
  if (prefit_t0) {
    model_t0 = *prefit_t0;
    model_t = *prefit_t;
  } else {
    t_stage = Clock::now();
    auto [fitted_t0, trace_t0] = fit(fit_t0, em);
    auto [fitted_t, trace_t] = fit(fit_t, em);
    report.timings.em_ms = ms_since(t_stage);
    model_t0 = std::move(fitted_t0);
    model_t = std::move(fitted_t);
    for (const auto& w : trace_t0.warnings) report.warnings.push_back("t0 fit: " + w);
    for (const auto& w : trace_t.warnings) report.warnings.push_back("t fit: " + w);
  }
  report.k_star_t0 = model_t0.size();
  report.k_star_t = model_t.size();

  t_stage = Clock::now();
  const ChangeModel change = detect_changes(model_t0, model_t, det);
  report.timings.emd_ms = ms_since(t_stage);

  const bool mined_is_t = det.mode == DetectionMode::appear;
  const MixtureModel& mined_fit_model = mined_is_t ? model_t : model_t0;
  report.labels = label_points(mined_is_t ? fit_t : fit_t0, mined_fit_model, change);
  report.mined_cloud = mined_is_t ? std::move(filtered_t) : std::move(filtered_t0);

  report.emd_trace = change.emd_trace;
  report.initial_emd = change.emd_trace.front();
  report.source_indices = change.source_indices;
  if (use_pca) {
    report.mined_model = detail::lift_model(*report.pca, mined_fit_model);
    report.extracted.reserve(change.extracted.size());
    for (const auto& c : change.extracted)
      report.extracted.push_back(detail::lift_component(*report.pca, c));
  } else {
    report.mined_model = mined_fit_model;
    report.extracted = change.extracted;
  }
  report.timings.total_ms = ms_since(t_total);
  return report;
}

}  // namespace gmmcd
