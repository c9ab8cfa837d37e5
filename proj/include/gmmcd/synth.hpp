#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gmmcd/common.hpp"
#include "gmmcd/eval.hpp"
#include "gmmcd/point_cloud.hpp"
#include "gmmcd/random.hpp"

namespace gmmcd {

/// A solid placed in the room. Boxes use `size` as full extents per axis;
/// spheres use size[0] as the radius.
struct ObjectSpec {
  enum class Shape { box, sphere };
  Shape shape = Shape::box;
  std::string name;
  Vec position = Vec::Zero(3);
  Vec size = Vec::Ones(3);
  bool present_at_t0 = true;
  bool present_at_t = true;
};

inline Aabb object_aabb(const ObjectSpec& object) {
  if (object.shape == ObjectSpec::Shape::sphere) {
    const Vec r = Vec::Constant(3, object.size[0]);
    return Aabb{object.position - r, object.position + r};
  }
  return Aabb{object.position - object.size / 2.0, object.position + object.size / 2.0};
}

struct PoseJitter {
  double translation_sigma = 0.01;                  // meters
  double rotation_sigma = 0.5 * M_PI / 180.0;       // radians
};

struct SceneSpec {
  Aabb room = Aabb{Vec::Zero(3), Vec::Ones(3)};
  double wall_point_density = 0.0;  // points per square meter
  std::vector<ObjectSpec> objects;
  double noise_sigma = 0.0;  // meters
  PoseJitter pose_jitter;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(wall_point_density >= 0.0)) throw Error("SceneSpec: negative wall_point_density");
    if (!(noise_sigma >= 0.0)) throw Error("SceneSpec: negative noise_sigma");
    if (!(pose_jitter.translation_sigma >= 0.0) || !(pose_jitter.rotation_sigma >= 0.0))
      throw Error("SceneSpec: negative pose jitter sigma");
    if (!((room.min_corner.array() < room.max_corner.array()).all()))
      throw Error("SceneSpec: room min must be below max on every axis");
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const ObjectSpec& o = objects[i];
      const int size_dims = o.shape == ObjectSpec::Shape::sphere ? 1 : 3;
      for (int d = 0; d < size_dims; ++d) {
        if (!(o.size[d] > 0.0))
          throw Error("SceneSpec: object " + std::to_string(i) + " has non-positive size");
      }
      const Aabb box = object_aabb(o);
      if ((box.min_corner.array() < room.min_corner.array()).any() ||
          (box.max_corner.array() > room.max_corner.array()).any())
        throw Error("SceneSpec: object " + std::to_string(i) + " does not fit inside the room");
    }
  }
};

struct ScenePair {
  PointCloud t0;
  PointCloud t;
  std::vector<GroundTruthRegion> truth;
};

namespace detail {

/// Stratified rectangle sampling: exactly round(area * density) points, one
/// uniform draw per grid cell, cells visited row-major so the draw order is
/// fixed.
inline void sample_rect(const Vec& origin, const Vec& edge_u, const Vec& edge_v,
                        double density, Rng& rng, std::vector<Vec>& out) {
  const double len_u = edge_u.norm();
  const double len_v = edge_v.norm();
  const long long n = std::llround(len_u * len_v * density);
  if (n <= 0) return;
  long long gu = std::max<long long>(
      1, std::llround(std::sqrt(static_cast<double>(n) * len_u / len_v)));
  long long gv = (n + gu - 1) / gu;
  while (gu * gv < n) ++gv;
  long long placed = 0;
  for (long long j = 0; j < gv && placed < n; ++j) {
    for (long long i = 0; i < gu && placed < n; ++i, ++placed) {
      const double fu = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(gu);
      const double fv = (static_cast<double>(j) + rng.uniform()) / static_cast<double>(gv);
      out.push_back(origin + fu * edge_u + fv * edge_v);
    }
  }
}

/// Six faces of a box, fixed order (x-min, x-max, y-min, y-max, z-min, z-max).
inline void sample_box_surface(const Aabb& box, double density, Rng& rng,
                               std::vector<Vec>& out) {
  const Vec d = box.max_corner - box.min_corner;
  const Vec ex(Vec::Unit(3, 0)), ey(Vec::Unit(3, 1)), ez(Vec::Unit(3, 2));
  const Vec lo = box.min_corner;
  sample_rect(lo, d[1] * ey, d[2] * ez, density, rng, out);
  sample_rect(lo + d[0] * ex, d[1] * ey, d[2] * ez, density, rng, out);
  sample_rect(lo, d[0] * ex, d[2] * ez, density, rng, out);
  sample_rect(lo + d[1] * ey, d[0] * ex, d[2] * ez, density, rng, out);
  sample_rect(lo, d[0] * ex, d[1] * ey, density, rng, out);
  sample_rect(lo + d[2] * ez, d[0] * ex, d[1] * ey, density, rng, out);
}

/// Deterministic spherical Fibonacci lattice; no RNG draws, so the point
/// count is exact and stratification comes from the lattice itself.
inline void sample_sphere_surface(const Vec& center, double radius, double density,
                                  std::vector<Vec>& out) {
  const long long n = std::llround(4.0 * M_PI * radius * radius * density);
  if (n <= 0) return;
  const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
  for (long long i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r_xy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    Vec p(3);
    p << std::cos(phi) * r_xy, std::sin(phi) * r_xy, z;
    out.push_back(center + radius * p);
  }
}

/// One cloud of the pair. The RNG stream is seeded from the scene seed and
/// the set of present objects, never from which slot (t0 or t) the cloud
/// fills, so two slots with the same content produce bit-identical clouds.
/// Draw order: jitter pose, wall cells, object surfaces in index order,
/// per-point noise.
inline PointCloud generate_cloud(const SceneSpec& spec, std::uint64_t present_mask) {
  Rng rng(derive_seed(spec.seed, present_mask));

  Vec translation = Vec::Zero(3);
  Mat rotation = Mat::Identity(3, 3);
  if (spec.pose_jitter.translation_sigma > 0.0 || spec.pose_jitter.rotation_sigma > 0.0) {
    for (int d = 0; d < 3; ++d)
      translation[d] = spec.pose_jitter.translation_sigma * rng.normal();
    Vec axis(3);
    do {
      for (int d = 0; d < 3; ++d) axis[d] = rng.normal();
    } while (axis.norm() < 1e-12);
    axis.normalize();
    const double angle = spec.pose_jitter.rotation_sigma * rng.normal();
    rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d(axis)).toRotationMatrix();
  }

  std::vector<Vec> points;
  sample_box_surface(spec.room, spec.wall_point_density, rng, points);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (!(present_mask >> i & 1)) continue;
    const ObjectSpec& o = spec.objects[i];
    if (o.shape == ObjectSpec::Shape::sphere)
      sample_sphere_surface(o.position, o.size[0], spec.wall_point_density, points);
    else
      sample_box_surface(object_aabb(o), spec.wall_point_density, rng, points);
  }

  // Noise displacement is capped at six sigma so every point stays that
  // close to its surface; the rigid jitter moves surfaces and points
  // together and does not widen the bound.
  if (spec.noise_sigma > 0.0) {
    const double cap = 6.0 * spec.noise_sigma;
    for (Vec& p : points) {
      Vec eps(3);
      for (int d = 0; d < 3; ++d) eps[d] = spec.noise_sigma * rng.normal();
      const double norm = eps.norm();
      if (norm > cap) eps *= cap / norm;
      p += eps;
    }
  }

  const Vec room_center = (spec.room.min_corner + spec.room.max_corner) / 2.0;
  Mat out(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        (rotation * (points[i] - room_center) + room_center + translation).transpose();
  return PointCloud(std::move(out));
}

}  // namespace detail

/// Samples the room walls and each present object's surface at the given
/// density for both instants, adds clamped isotropic noise, and applies an
/// independent rigid pose jitter per cloud. Ground truth lists the unjittered
/// boxes of objects whose presence differs between the instants.
inline ScenePair generate_pair(const SceneSpec& spec) {
  spec.validate();
  if (spec.wall_point_density == 0.0)
    throw Error("generate_pair: zero point density produces an empty scene");
  if (spec.objects.size() > 64) throw Error("generate_pair: more than 64 objects");

  std::uint64_t mask_t0 = 0, mask_t = 0;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (spec.objects[i].present_at_t0) mask_t0 |= std::uint64_t{1} << i;
    if (spec.objects[i].present_at_t) mask_t |= std::uint64_t{1} << i;
  }

  ScenePair pair;
  pair.t0 = detail::generate_cloud(spec, mask_t0);
  pair.t = detail::generate_cloud(spec, mask_t);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    if (o.present_at_t0 == o.present_at_t) continue;
    GroundTruthRegion region;
    region.name = o.name.empty() ? "object_" + std::to_string(i) : o.name;
    region.kind = o.present_at_t ? RegionKind::appeared : RegionKind::disappeared;
    region.aabb = object_aabb(o);
    pair.truth.push_back(std::move(region));
  }
  return pair;
}

}  // namespace gmmcd
