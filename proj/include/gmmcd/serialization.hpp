#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmmcd/change_detection.hpp"
#include "gmmcd/common.hpp"
#include "gmmcd/eval.hpp"
#include "gmmcd/filters.hpp"
#include "gmmcd/gmm.hpp"
#include "gmmcd/pca.hpp"
#include "gmmcd/synth.hpp"
#include "gmmcd/transport.hpp"

/// JSON bindings for the library types. Keys are emitted in nlohmann's
/// default sorted order, so serializing the same value twice produces the
/// same bytes.

namespace gmmcd {

inline nlohmann::json json_vec(const Vec& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Vec vec_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw Error(std::string(what) + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

/// Matrix as a list of row arrays.
inline nlohmann::json json_mat_rows(const Mat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(json_vec(m.row(r).transpose()));
  return j;
}

inline Mat mat_from_json_rows(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw Error(std::string(what) + ": expected an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  Mat m(rows, rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = vec_from_json(j[static_cast<std::size_t>(r)], what);
    if (row.size() != m.cols()) throw Error(std::string(what) + ": ragged rows");
    m.row(r) = row.transpose();
  }
  return m;
}

/// Square matrix as a flat row-major array.
inline nlohmann::json json_mat_flat(const Mat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) j.push_back(m(r, c));
  return j;
}

inline Mat square_mat_from_json_flat(const nlohmann::json& j, Eigen::Index dim,
                                     const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim * dim)
    throw Error(std::string(what) + ": expected " + std::to_string(dim * dim) + " entries");
  Mat m(dim, dim);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < dim; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) m(r, c) = j[i++].get<double>();
  return m;
}

inline void to_json(nlohmann::json& j, const Aabb& box) {
  j = nlohmann::json{{"min", json_vec(box.min_corner)}, {"max", json_vec(box.max_corner)}};
}

inline void from_json(const nlohmann::json& j, Aabb& box) {
  box.min_corner = vec_from_json(j.at("min"), "Aabb.min");
  box.max_corner = vec_from_json(j.at("max"), "Aabb.max");
  if (box.min_corner.size() != box.max_corner.size())
    throw Error("Aabb: min and max lengths differ");
}

inline void to_json(nlohmann::json& j, const GaussianComponent& c) {
  j = nlohmann::json{{"weight", c.weight},
                     {"mean", json_vec(c.mean)},
                     {"covariance", json_mat_flat(c.covariance)}};
}

inline void from_json(const nlohmann::json& j, GaussianComponent& c) {
  c.weight = j.at("weight").get<double>();
  c.mean = vec_from_json(j.at("mean"), "component.mean");
  c.covariance = square_mat_from_json_flat(j.at("covariance"), c.mean.size(),
                                           "component.covariance");
}

inline void to_json(nlohmann::json& j, const MixtureModel& m) {
  j = nlohmann::json{{"dim", m.dim}, {"components", m.components}};
}

inline void from_json(const nlohmann::json& j, MixtureModel& m) {
  m.dim = j.at("dim").get<int>();
  m.components = j.at("components").get<std::vector<GaussianComponent>>();
  m.validate();
}

inline void to_json(nlohmann::json& j, const EmConfig& c) {
  j = nlohmann::json{{"k_init", c.k_init},
                     {"k_min", c.k_min},
                     {"tol", c.tol},
                     {"max_iters", c.max_iters},
                     {"seed", c.seed},
                     {"covariance_floor", c.covariance_floor},
                     {"force_annihilation", c.force_annihilation}};
}

inline void from_json(const nlohmann::json& j, EmConfig& c) {
  c.k_init = j.value("k_init", c.k_init);
  c.k_min = j.value("k_min", c.k_min);
  c.tol = j.value("tol", c.tol);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.seed = j.value("seed", c.seed);
  c.covariance_floor = j.value("covariance_floor", c.covariance_floor);
  c.force_annihilation = j.value("force_annihilation", c.force_annihilation);
}

inline void to_json(nlohmann::json& j, const DetectionMode& m) { j = to_string(m); }

inline void from_json(const nlohmann::json& j, DetectionMode& m) {
  const std::string s = j.get<std::string>();
  if (s == "appear") m = DetectionMode::appear;
  else if (s == "disappear") m = DetectionMode::disappear;
  else throw Error("unknown detection mode '" + s + "'");
}

inline void to_json(nlohmann::json& j, const DetectionConfig& c) {
  j = nlohmann::json{{"mode", c.mode},
                     {"min_extractions", c.min_extractions},
                     {"max_extractions", c.max_extractions},
                     {"renormalize", c.renormalize}};
}

inline void from_json(const nlohmann::json& j, DetectionConfig& c) {
  c.mode = j.value("mode", c.mode);
  c.min_extractions = j.value("min_extractions", c.min_extractions);
  c.max_extractions = j.value("max_extractions", c.max_extractions);
  c.renormalize = j.value("renormalize", c.renormalize);
}

inline void to_json(nlohmann::json& j, const FilterParams& p) {
  j = nlohmann::json{{"voxel_size", p.voxel_size},
                     {"sor_neighbors", p.sor_neighbors},
                     {"sor_stddev_mult", p.sor_stddev_mult}};
}

inline void from_json(const nlohmann::json& j, FilterParams& p) {
  p.voxel_size = j.value("voxel_size", p.voxel_size);
  p.sor_neighbors = j.value("sor_neighbors", p.sor_neighbors);
  p.sor_stddev_mult = j.value("sor_stddev_mult", p.sor_stddev_mult);
}

inline void to_json(nlohmann::json& j, const StageTimings& t) {
  j = nlohmann::json{{"data_loading_ms", t.data_loading_ms},
                     {"filtering_ms", t.filtering_ms},
                     {"pca_ms", t.pca_ms},
                     {"em_ms", t.em_ms},
                     {"emd_ms", t.emd_ms},
                     {"total_ms", t.total_ms}};
}

inline void to_json(nlohmann::json& j, const PcaTransform& t) {
  j = nlohmann::json{{"mean", json_vec(t.mean)},
                     {"basis", json_mat_rows(t.basis)},
                     {"explained_variance", json_vec(t.explained_variance)}};
}

inline void from_json(const nlohmann::json& j, PcaTransform& t) {
  t.mean = vec_from_json(j.at("mean"), "pca.mean");
  t.basis = mat_from_json_rows(j.at("basis"), "pca.basis");
  t.explained_variance = vec_from_json(j.at("explained_variance"), "pca.explained_variance");
}

inline void to_json(nlohmann::json& j, const DetectionReport& r) {
  j = nlohmann::json{{"mode", r.mode},
                     {"k_star_t0", r.k_star_t0},
                     {"k_star_t", r.k_star_t},
                     {"initial_emd", r.initial_emd},
                     {"emd_trace", r.emd_trace},
                     {"extracted", r.extracted},
                     {"source_indices", r.source_indices},
                     {"mined_model", r.mined_model},
                     {"labels", r.labels},
                     {"timings", r.timings},
                     {"config",
                      nlohmann::json{{"em", r.em},
                                     {"detection", r.detection},
                                     {"filters", r.filters},
                                     {"use_pca", r.use_pca}}},
                     {"warnings", r.warnings}};
  if (r.pca) j["pca"] = *r.pca;
}

inline void from_json(const nlohmann::json& j, DetectionReport& r) {
  r.mode = j.at("mode").get<DetectionMode>();
  r.mined_model = j.at("mined_model").get<MixtureModel>();
  r.source_indices = j.at("source_indices").get<std::vector<int>>();
  r.k_star_t0 = j.value("k_star_t0", 0);
  r.k_star_t = j.value("k_star_t", 0);
  r.initial_emd = j.value("initial_emd", 0.0);
  r.emd_trace = j.value("emd_trace", std::vector<double>{});
  if (j.contains("extracted"))
    r.extracted = j.at("extracted").get<std::vector<GaussianComponent>>();
  if (j.contains("labels")) r.labels = j.at("labels").get<std::vector<std::uint8_t>>();
  if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (j.contains("pca")) r.pca = j.at("pca").get<PcaTransform>();
  if (j.contains("config")) {
    const auto& cfg = j.at("config");
    r.em = cfg.value("em", r.em);
    r.detection = cfg.value("detection", r.detection);
    r.filters = cfg.value("filters", r.filters);
    r.use_pca = cfg.value("use_pca", r.use_pca);
  }
}

inline void to_json(nlohmann::json& j, const RegionKind& k) { j = to_string(k); }

inline void from_json(const nlohmann::json& j, RegionKind& k) {
  const std::string s = j.get<std::string>();
  if (s == "appeared") k = RegionKind::appeared;
  else if (s == "disappeared") k = RegionKind::disappeared;
  else throw Error("unknown region kind '" + s + "'");
}

inline void to_json(nlohmann::json& j, const GroundTruthRegion& r) {
  j = nlohmann::json{{"name", r.name}, {"kind", r.kind}, {"aabb", r.aabb}};
}

inline void from_json(const nlohmann::json& j, GroundTruthRegion& r) {
  r.name = j.value("name", std::string{});
  r.kind = j.at("kind").get<RegionKind>();
  r.aabb = j.at("aabb").get<Aabb>();
}

inline void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline void from_json(const nlohmann::json& j, ConfusionCounts& c) {
  c.tp = j.at("tp").get<int>();
  c.fp = j.at("fp").get<int>();
  c.fn = j.at("fn").get<int>();
  c.tn = j.at("tn").get<int>();
}

inline void to_json(nlohmann::json& j, const Metrics& m) {
  j = nlohmann::json::object();
  j["accuracy"] = m.accuracy ? nlohmann::json(*m.accuracy) : nlohmann::json(nullptr);
  j["precision"] = m.precision ? nlohmann::json(*m.precision) : nlohmann::json(nullptr);
  j["recall"] = m.recall ? nlohmann::json(*m.recall) : nlohmann::json(nullptr);
  j["f1"] = m.f1 ? nlohmann::json(*m.f1) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const ObjectSpec& o) {
  j = nlohmann::json{{"shape", o.shape == ObjectSpec::Shape::sphere ? "sphere" : "box"},
                     {"name", o.name},
                     {"position", json_vec(o.position)},
                     {"size", json_vec(o.size)},
                     {"present_at_t0", o.present_at_t0},
                     {"present_at_t", o.present_at_t}};
}

inline void from_json(const nlohmann::json& j, ObjectSpec& o) {
  const std::string shape = j.value("shape", std::string("box"));
  if (shape == "box") o.shape = ObjectSpec::Shape::box;
  else if (shape == "sphere") o.shape = ObjectSpec::Shape::sphere;
  else throw Error("unknown object shape '" + shape + "'");
  o.name = j.value("name", std::string{});
  o.position = vec_from_json(j.at("position"), "object.position");
  o.size = vec_from_json(j.at("size"), "object.size");
  if (o.size.size() == 1) o.size = Vec::Constant(3, o.size[0]);
  o.present_at_t0 = j.value("present_at_t0", true);
  o.present_at_t = j.value("present_at_t", true);
}

inline void to_json(nlohmann::json& j, const PoseJitter& p) {
  j = nlohmann::json{{"translation_sigma", p.translation_sigma},
                     {"rotation_sigma", p.rotation_sigma}};
}

inline void from_json(const nlohmann::json& j, PoseJitter& p) {
  p.translation_sigma = j.value("translation_sigma", p.translation_sigma);
  p.rotation_sigma = j.value("rotation_sigma", p.rotation_sigma);
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"room", s.room},
                     {"wall_point_density", s.wall_point_density},
                     {"objects", s.objects},
                     {"noise_sigma", s.noise_sigma},
                     {"pose_jitter", s.pose_jitter},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  s.room = j.at("room").get<Aabb>();
  s.wall_point_density = j.at("wall_point_density").get<double>();
  if (j.contains("objects")) s.objects = j.at("objects").get<std::vector<ObjectSpec>>();
  s.noise_sigma = j.value("noise_sigma", 0.0);
  s.pose_jitter = j.value("pose_jitter", PoseJitter{});
  s.seed = j.value("seed", std::uint64_t{0});
}

inline void to_json(nlohmann::json& j, const Signature& s) {
  j = nlohmann::json{{"positions", json_mat_rows(s.positions)}, {"masses", json_vec(s.masses)}};
}

inline void to_json(nlohmann::json& j, const FlowMatrix& f) {
  j = nlohmann::json{{"flows", json_mat_rows(f.flows)}, {"total_flow", f.total_flow}};
}

}  // namespace gmmcd
