#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gmmcd/common.hpp"
#include "gmmcd/point_cloud.hpp"
#include "gmmcd/random.hpp"

namespace gmmcd {

struct GaussianComponent {
  double weight = 0.0;  // in (0, 1]
  Vec mean;             // D
  Mat covariance;       // D x D, symmetric positive-definite
};

/// Number of free parameters of one D-dimensional Gaussian component
/// (mean plus symmetric covariance): D + D(D+1)/2.
inline int component_parameter_count(int dim) { return dim + dim * (dim + 1) / 2; }

struct MixtureModel {
  int dim = 0;
  std::vector<GaussianComponent> components;

  int size() const { return static_cast<int>(components.size()); }

  /// Checks the structural invariants: weights in (0,1] summing to 1 within
  /// 1e-9, symmetric covariances of the declared dimension.
  void validate() const {
    if (dim < 1) throw Error("MixtureModel: dim must be >= 1");
    if (components.empty()) throw Error("MixtureModel: no components");
    double total = 0.0;
    for (std::size_t k = 0; k < components.size(); ++k) {
      const auto& c = components[k];
      const std::string tag = "MixtureModel: component " + std::to_string(k);
      if (!(c.weight > 0.0) || c.weight > 1.0 + 1e-12)
        throw Error(tag + " weight outside (0, 1]");
      if (c.mean.size() != dim) throw Error(tag + " mean has wrong dimension");
      if (c.covariance.rows() != dim || c.covariance.cols() != dim)
        throw Error(tag + " covariance has wrong shape");
      if (!c.covariance.isApprox(c.covariance.transpose(), 1e-12))
        throw Error(tag + " covariance is not symmetric");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("MixtureModel: weights do not sum to 1");
  }
};

struct EmConfig {
  int k_init = 25;
  int k_min = 1;
  double tol = 1e-5;   // absolute log-likelihood change threshold
  int max_iters = 100;
  std::uint64_t seed = 0;
  double covariance_floor = 1e-6;  // scaled by trace(data covariance)/D
  bool force_annihilation = true;

  void validate() const {
    if (k_min < 1) throw Error("EmConfig: k_min must be >= 1");
    if (k_init < k_min) throw Error("EmConfig: k_init must be >= k_min");
    if (!(tol > 0.0)) throw Error("EmConfig: tol must be > 0");
    if (max_iters < 1) throw Error("EmConfig: max_iters must be >= 1");
    if (!(covariance_floor >= 0.0)) throw Error("EmConfig: covariance_floor must be >= 0");
  }
};

/// One EM iteration as recorded by fit. `converged` marks the final iteration
/// of an inner run whose model entered candidate selection.
struct EmIterationRecord {
  int iteration = 0;        // global index across the whole fit call
  int live_components = 0;
  double negative_log_likelihood = 0.0;
  double mdl_cost = 0.0;
  bool converged = false;
};

struct EmTrace {
  std::vector<EmIterationRecord> iterations;
  double selected_cost = 0.0;  // minimum MDL cost over converged candidates
  int k_star = 0;
  std::vector<std::string> warnings;
};

/// log N(point; mean, covariance) evaluated via Cholesky factorization.
inline double component_logpdf(const GaussianComponent& component, const Vec& point) {
  const int dim = static_cast<int>(component.mean.size());
  if (point.size() != component.mean.size())
    throw Error("component_logpdf: point dimension does not match component");
  Eigen::LLT<Mat> llt(component.covariance);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(component.covariance);
    throw Error("component_logpdf: covariance not positive-definite (smallest eigenvalue " +
                std::to_string(eig.eigenvalues().minCoeff()) + ")");
  }
  double log_det = 0.0;
  for (int d = 0; d < dim; ++d) log_det += 2.0 * std::log(llt.matrixL()(d, d));
  Vec diff = point - component.mean;
  llt.matrixL().solveInPlace(diff);
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (dim * kLog2Pi + log_det + diff.squaredNorm());
}

namespace detail {

/// Per-point per-component log α_k + log N(s_i; μ_k, Σ_k), N x k.
inline Mat weighted_log_densities(const MixtureModel& model, const PointCloud& cloud) {
  const Eigen::Index n = cloud.points.rows();
  const int dim = model.dim;
  Mat logp(n, model.size());
  for (int k = 0; k < model.size(); ++k) {
    const auto& c = model.components[k];
    Eigen::LLT<Mat> llt(c.covariance);
    if (llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Mat> eig(c.covariance);
      throw Error("e_step: component " + std::to_string(k) +
                  " covariance not positive-definite (smallest eigenvalue " +
                  std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
    double log_det = 0.0;
    for (int d = 0; d < dim; ++d) log_det += 2.0 * std::log(llt.matrixL()(d, d));
    Mat centered = (cloud.points.rowwise() - c.mean.transpose()).transpose();  // D x N
    llt.matrixL().solveInPlace(centered);
    constexpr double kLog2Pi = 1.8378770664093454836;
    const double offset = std::log(c.weight) - 0.5 * (dim * kLog2Pi + log_det);
    logp.col(k) = (-0.5 * centered.colwise().squaredNorm().transpose().array() + offset).matrix();
  }
  return logp;
}

/// Responsibilities plus the model's log-likelihood from one density pass.
inline double e_step_with_log_likelihood(const MixtureModel& model, const PointCloud& cloud,
                                         Mat& responsibilities) {
  Mat logp = weighted_log_densities(model, cloud);
  const Eigen::Index n = logp.rows();
  double log_likelihood = 0.0;
  responsibilities.resize(n, logp.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double row_max = logp.row(i).maxCoeff();
    responsibilities.row(i) = (logp.row(i).array() - row_max).exp();
    const double row_sum = responsibilities.row(i).sum();
    assert(row_sum > 0.0);
    responsibilities.row(i) /= row_sum;
    log_likelihood += row_max + std::log(row_sum);
  }
  return log_likelihood;
}

/// MDL cost from an already-computed log-likelihood.
inline double mdl_cost_from_log_likelihood(const MixtureModel& model, std::size_t n_points,
                                           double log_likelihood) {
  const double n = static_cast<double>(n_points);
  const double p = component_parameter_count(model.dim);
  const double k_nz = model.size();
  double weight_term = 0.0;
  for (const auto& c : model.components) {
    assert(n * c.weight / 12.0 > 0.0);
    weight_term += std::log(n * c.weight / 12.0);
  }
  return 0.5 * p * weight_term + 0.5 * k_nz * std::log(n / 2.0) +
         k_nz * (p + 1.0) / 2.0 - log_likelihood;
}

}  // namespace detail

/// Responsibility matrix W (N x k): w_{i,k} = α_k p(s_i|θ_k) / Σ_j α_j p(s_i|θ_j),
/// computed in log space with per-row max subtraction. Rows sum to 1.
inline Mat e_step(const MixtureModel& model, const PointCloud& cloud) {
  if (model.dim != cloud.dim()) throw Error("e_step: model and cloud dims differ");
  Mat w;
  detail::e_step_with_log_likelihood(model, cloud, w);
  return w;
}

/// Σ_i log Σ_k α_k p(s_i|θ_k), log-sum-exp stabilized. Empty cloud returns 0
/// by convention (a sum over no points).
inline double log_likelihood(const MixtureModel& model, const PointCloud& cloud) {
  if (cloud.empty()) return 0.0;
  if (model.dim != cloud.dim()) throw Error("log_likelihood: model and cloud dims differ");
  Mat logp = detail::weighted_log_densities(model, cloud);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double row_max = logp.row(i).maxCoeff();
    total += row_max + std::log((logp.row(i).array() - row_max).exp().sum());
  }
  return total;
}

/// Description-length cost of a mixture on a cloud: for live components,
/// (P/2)·Σ_k log(N·α_k/12) + (k/2)·log(N/2) + k(P+1)/2 − log-likelihood.
inline double mdl_cost(const MixtureModel& model, const PointCloud& cloud) {
  if (model.components.empty()) throw Error("mdl_cost: model has no components");
  return detail::mdl_cost_from_log_likelihood(model, static_cast<std::size_t>(cloud.size()),
                                              log_likelihood(model, cloud));
}

/// K components with means drawn without replacement from the cloud (seeded),
/// isotropic covariances sized from the data covariance, uniform weights.
/// A cloud with fewer than K points reduces K to the point count and reports
/// a warning through `warnings` when given.
inline MixtureModel initialize(const PointCloud& cloud, const EmConfig& config,
                               std::vector<std::string>* warnings = nullptr) {
  config.validate();
  if (cloud.empty()) throw Error("initialize: empty cloud");
  int k = config.k_init;
  if (static_cast<std::size_t>(k) > cloud.size()) {
    k = static_cast<int>(cloud.size());
    if (warnings)
      warnings->push_back("initialize: k_init reduced to point count " + std::to_string(k));
  }

  double scale = 0.0;
  if (cloud.size() > 1) scale = sample_covariance(cloud).trace() / cloud.dim();
  if (!(scale > 0.0)) scale = 1.0;  // degenerate cloud: all points coincide

  Rng rng(config.seed);
  const std::vector<std::size_t> picks = rng.sample_without_replacement(cloud.size(), k);

  MixtureModel model;
  model.dim = cloud.dim();
  model.components.resize(k);
  const Mat initial_cov = (scale / 10.0) * Mat::Identity(model.dim, model.dim);
  for (int j = 0; j < k; ++j) {
    model.components[j].weight = 1.0 / k;
    model.components[j].mean = cloud.point(picks[j]);
    model.components[j].covariance = initial_cov;
  }
  return model;
}

/// M-step with component annihilation: support n_k = Σ_i w_{i,k}; new weights
/// α_k ∝ max{0, n_k − P/2}; zero-weight components are deleted; survivors get
/// the weighted mean and weighted covariance plus `covariance_floor`·I (the
/// caller passes the already-scaled floor). If every component annihilates at
/// once, the largest-support component is kept with weight 1 and `degenerate`
/// is set.
inline MixtureModel modified_m_step(const MixtureModel& model, const PointCloud& cloud,
                                    const Mat& responsibilities, double covariance_floor,
                                    bool* degenerate = nullptr) {
  if (model.dim != cloud.dim()) throw Error("modified_m_step: model and cloud dims differ");
  if (responsibilities.rows() != cloud.points.rows() ||
      responsibilities.cols() != model.size())
    throw Error("modified_m_step: responsibility matrix shape mismatch");
  if (degenerate) *degenerate = false;

  const int k_old = model.size();
  const double half_p = 0.5 * component_parameter_count(model.dim);
  Vec support = responsibilities.colwise().sum();

  std::vector<int> keep;
  double weight_total = 0.0;
  for (int k = 0; k < k_old; ++k) {
    const double trimmed = std::max(0.0, support[k] - half_p);
    if (trimmed > 0.0) {
      keep.push_back(k);
      weight_total += trimmed;
    }
  }
  if (keep.empty()) {
    int best = 0;
    for (int k = 1; k < k_old; ++k) {
      if (support[k] > support[best]) best = k;
    }
    keep.push_back(best);
    weight_total = 1.0;  // sole survivor gets weight 1 below
    if (degenerate) *degenerate = true;
  }

  MixtureModel out;
  out.dim = model.dim;
  out.components.resize(keep.size());
  const Mat floor_term = covariance_floor * Mat::Identity(model.dim, model.dim);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const int k = keep[j];
    auto& c = out.components[j];
    c.weight = (keep.size() == 1) ? 1.0 : std::max(0.0, support[k] - half_p) / weight_total;
    const Vec w = responsibilities.col(k);
    c.mean = (cloud.points.transpose() * w) / support[k];
    Mat centered = cloud.points.rowwise() - c.mean.transpose();
    c.covariance =
        (centered.transpose() * w.asDiagonal() * centered) / support[k] + floor_term;
    c.covariance = 0.5 * (c.covariance + c.covariance.transpose());
  }
  return out;
}

/// EM with per-step annihilation and description-length model selection.
/// Runs initialize, converges the inner EM (absolute log-likelihood change
/// below tol, at most max_iters iterations), then, when force_annihilation is
/// set, repeatedly deletes the smallest-weight live component (ties to the
/// lowest index), renormalizes, and re-converges, down to k_min components.
/// Returns the candidate with the smallest recorded cost; its component count
/// is K*.
inline std::pair<MixtureModel, EmTrace> fit(const PointCloud& cloud, const EmConfig& config) {
  config.validate();
  if (cloud.empty()) throw Error("fit: empty cloud");

  EmTrace trace;
  MixtureModel model = initialize(cloud, config, &trace.warnings);

  double scale = 0.0;
  if (cloud.size() > 1) scale = sample_covariance(cloud).trace() / cloud.dim();
  if (!(scale > 0.0)) scale = 1.0;
  const double floor = config.covariance_floor * scale;
  const std::size_t n_points = cloud.size();

  MixtureModel best_model;
  double best_cost = std::numeric_limits<double>::infinity();
  int global_iter = 0;
  bool warned_degenerate = false;

  // Converges the inner EM from the current model. Appends one trace record
  // per iteration; the last record of the run carries the candidate cost.
  const auto inner_run = [&](MixtureModel current) {
    Mat w;
    double ll = detail::e_step_with_log_likelihood(current, cloud, w);
    double final_cost = 0.0;
    for (int l = 0; l < config.max_iters; ++l) {
      bool degenerate = false;
      current = modified_m_step(current, cloud, w, floor, &degenerate);
      if (degenerate && !warned_degenerate) {
        trace.warnings.push_back("fit: all components annihilated at once; kept the "
                                 "largest-support component");
        warned_degenerate = true;
      }
      const double next_ll = detail::e_step_with_log_likelihood(current, cloud, w);
      final_cost = detail::mdl_cost_from_log_likelihood(current, n_points, next_ll);
      trace.iterations.push_back(
          {global_iter++, current.size(), -next_ll, final_cost, false});
      const bool converged = std::abs(next_ll - ll) < config.tol;
      ll = next_ll;
      if (converged) break;
    }
    return std::make_pair(std::move(current), final_cost);
  };

  const auto consider = [&](const MixtureModel& candidate, double cost) {
    if (candidate.size() < config.k_min) return;
    if (!trace.iterations.empty()) trace.iterations.back().converged = true;
    if (cost < best_cost) {
      best_cost = cost;
      best_model = candidate;
    }
  };

  auto [converged_model, cost] = inner_run(std::move(model));
  model = std::move(converged_model);
  consider(model, cost);

  if (config.force_annihilation) {
    while (model.size() > config.k_min) {
      int smallest = 0;
      for (int k = 1; k < model.size(); ++k) {
        if (model.components[k].weight < model.components[smallest].weight) smallest = k;
      }
      model.components.erase(model.components.begin() + smallest);
      double total = 0.0;
      for (const auto& c : model.components) total += c.weight;
      for (auto& c : model.components) c.weight /= total;

      auto [next_model, next_cost] = inner_run(std::move(model));
      model = std::move(next_model);
      consider(model, next_cost);
      if (model.size() < config.k_min) break;
    }
  }

  if (!std::isfinite(best_cost)) {
    // Every converged candidate fell below k_min; return the closest one.
    trace.warnings.push_back("fit: annihilation never settled at or above k_min");
    best_model = model;
    best_cost = detail::mdl_cost_from_log_likelihood(best_model, n_points,
                                                     log_likelihood(best_model, cloud));
  }
  trace.selected_cost = best_cost;
  trace.k_star = best_model.size();
  return {std::move(best_model), std::move(trace)};
}

}  // namespace gmmcd
