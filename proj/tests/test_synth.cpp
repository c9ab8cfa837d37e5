#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gmmcd/synth.hpp"

using gmmcd::Aabb;
using gmmcd::ObjectSpec;
using gmmcd::PointCloud;
using gmmcd::RegionKind;
using gmmcd::ScenePair;
using gmmcd::SceneSpec;
using gmmcd::Vec;

namespace {

/// Distance from a point to the boundary surface of a box: the distance to
/// the solid when outside, the smallest face margin when inside.
double box_surface_distance(const Vec& p, const Aabb& box) {
  double outside2 = 0.0;
  double margin = std::numeric_limits<double>::infinity();
  bool inside = true;
  for (int d = 0; d < 3; ++d) {
    if (p[d] < box.min_corner[d]) {
      inside = false;
      outside2 += (box.min_corner[d] - p[d]) * (box.min_corner[d] - p[d]);
    } else if (p[d] > box.max_corner[d]) {
      inside = false;
      outside2 += (p[d] - box.max_corner[d]) * (p[d] - box.max_corner[d]);
    } else {
      margin = std::min({margin, p[d] - box.min_corner[d], box.max_corner[d] - p[d]});
    }
  }
  return inside ? margin : std::sqrt(outside2);
}

double scene_surface_distance(const Vec& p, const SceneSpec& spec, bool at_t) {
  double best = box_surface_distance(p, spec.room);
  for (const ObjectSpec& o : spec.objects) {
    if (!(at_t ? o.present_at_t : o.present_at_t0)) continue;
    if (o.shape == ObjectSpec::Shape::sphere) {
      best = std::min(best, std::abs((p - o.position).norm() - o.size[0]));
    } else {
      best = std::min(best, box_surface_distance(p, gmmcd::object_aabb(o)));
    }
  }
  return best;
}

double max_surface_distance(const PointCloud& cloud, const SceneSpec& spec, bool at_t) {
  double worst = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    worst = std::max(worst, scene_surface_distance(cloud.point(i), spec, at_t));
  }
  return worst;
}

SceneSpec two_object_spec() {
  SceneSpec spec;
  spec.room = Aabb{Vec::Zero(3), Vec::Constant(3, 4.0)};
  spec.wall_point_density = 25.0;
  spec.seed = 501;

  ObjectSpec box;
  box.position = Vec::Constant(3, 1.0);
  box.size = Vec::Constant(3, 0.4);
  spec.objects.push_back(box);

  ObjectSpec sphere;
  sphere.shape = ObjectSpec::Shape::sphere;
  sphere.position = Vec::Constant(3, 3.0);
  sphere.size[0] = 0.3;
  sphere.present_at_t0 = false;
  spec.objects.push_back(sphere);
  return spec;
}

}  // namespace

TEST_CASE("scene generation is deterministic", "[synth]") {
  SceneSpec spec = two_object_spec();
  spec.noise_sigma = 0.005;
  const ScenePair a = gmmcd::generate_pair(spec);
  const ScenePair b = gmmcd::generate_pair(spec);
  REQUIRE(a.t0.points == b.t0.points);
  REQUIRE(a.t.points == b.t.points);
  REQUIRE(a.truth.size() == b.truth.size());
  for (std::size_t i = 0; i < a.truth.size(); ++i) {
    REQUIRE(a.truth[i].name == b.truth[i].name);
    REQUIRE(a.truth[i].kind == b.truth[i].kind);
    REQUIRE(a.truth[i].aabb.min_corner == b.truth[i].aabb.min_corner);
  }

  SceneSpec reseeded = spec;
  reseeded.seed = 502;
  REQUIRE(gmmcd::generate_pair(reseeded).t0.points != a.t0.points);
}

TEST_CASE("wall point counts follow the area density exactly", "[synth]") {
  SceneSpec spec;
  spec.room = Aabb{Vec::Zero(3), Vec::Constant(3, 2.0)};
  spec.wall_point_density = 100.0;
  spec.seed = 503;
  spec.pose_jitter.translation_sigma = 0.0;  // keep face coordinates exact
  spec.pose_jitter.rotation_sigma = 0.0;
  const ScenePair pair = gmmcd::generate_pair(spec);

  // Six 4 m^2 faces at 100 points per m^2.
  REQUIRE(pair.t0.size() == 2400);
  // Identical content (no objects) means identical clouds, jitter included.
  REQUIRE(pair.t0.points == pair.t.points);

  // Each axis-minimum and axis-maximum face carries its own quota.
  for (int d = 0; d < 3; ++d) {
    std::size_t at_min = 0, at_max = 0;
    for (std::size_t i = 0; i < pair.t0.size(); ++i) {
      const double x = pair.t0.point(i)[d];
      if (x == 0.0) ++at_min;
      if (x == 2.0) ++at_max;
    }
    REQUIRE(at_min == 400);
    REQUIRE(at_max == 400);
  }
}

TEST_CASE("object surfaces carry density-exact point counts", "[synth]") {
  const SceneSpec spec = two_object_spec();
  const ScenePair pair = gmmcd::generate_pair(spec);

  // Walls: 6 faces * 16 m^2 * 25 / m^2. Box: 6 faces * round(0.16 * 25).
  // Sphere: round(4 * pi * 0.09 * 25) = 28, present only at t.
  REQUIRE(pair.t0.size() == 2400 + 24);
  REQUIRE(pair.t.size() == 2400 + 24 + 28);

  REQUIRE(pair.truth.size() == 1);
  REQUIRE(pair.truth[0].kind == RegionKind::appeared);
  REQUIRE(pair.truth[0].name == "object_1");
  REQUIRE((pair.truth[0].aabb.min_corner - Vec::Constant(3, 2.7)).cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE((pair.truth[0].aabb.max_corner - Vec::Constant(3, 3.3)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("noise-free points lie exactly on scene surfaces", "[synth]") {
  SceneSpec spec = two_object_spec();
  spec.pose_jitter.translation_sigma = 0.0;
  spec.pose_jitter.rotation_sigma = 0.0;
  const ScenePair pair = gmmcd::generate_pair(spec);
  REQUIRE(max_surface_distance(pair.t0, spec, false) < 1e-12);
  REQUIRE(max_surface_distance(pair.t, spec, true) < 1e-12);
}

TEST_CASE("noisy points stay within six sigma of a surface", "[synth]") {
  SceneSpec spec = two_object_spec();
  spec.pose_jitter.translation_sigma = 0.0;
  spec.pose_jitter.rotation_sigma = 0.0;
  spec.noise_sigma = 0.01;
  const ScenePair pair = gmmcd::generate_pair(spec);
  const double bound = 6.0 * spec.noise_sigma + 1e-12;
  REQUIRE(max_surface_distance(pair.t0, spec, false) <= bound);
  REQUIRE(max_surface_distance(pair.t, spec, true) <= bound);
  // The noise must actually displace points off the ideal surfaces.
  REQUIRE(max_surface_distance(pair.t0, spec, false) > 1e-4);
}

TEST_CASE("swapping every presence flag swaps the clouds bitwise", "[synth]") {
  SceneSpec spec = two_object_spec();
  spec.noise_sigma = 0.005;  // keep default pose jitter active
  ObjectSpec third;
  third.position = Vec::Constant(3, 2.0);
  third.size = Vec::Constant(3, 0.3);
  third.name = "crate";
  third.present_at_t0 = true;
  third.present_at_t = false;
  spec.objects.push_back(third);

  SceneSpec flipped = spec;
  for (ObjectSpec& o : flipped.objects) std::swap(o.present_at_t0, o.present_at_t);

  const ScenePair forward = gmmcd::generate_pair(spec);
  const ScenePair reversed = gmmcd::generate_pair(flipped);
  REQUIRE(forward.t0.points == reversed.t.points);
  REQUIRE(forward.t.points == reversed.t0.points);

  REQUIRE(forward.truth.size() == 2);
  REQUIRE(reversed.truth.size() == 2);
  for (std::size_t i = 0; i < forward.truth.size(); ++i) {
    REQUIRE(forward.truth[i].name == reversed.truth[i].name);
    REQUIRE(forward.truth[i].kind != reversed.truth[i].kind);
    REQUIRE(forward.truth[i].aabb.min_corner == reversed.truth[i].aabb.min_corner);
    REQUIRE(forward.truth[i].aabb.max_corner == reversed.truth[i].aabb.max_corner);
  }
  REQUIRE(forward.truth[1].name == "crate");
  REQUIRE(forward.truth[1].kind == RegionKind::disappeared);
}

TEST_CASE("invalid scene specifications are rejected", "[synth]") {
  SceneSpec spec = two_object_spec();
  spec.wall_point_density = 0.0;
  REQUIRE_THROWS_WITH(gmmcd::generate_pair(spec),
                      Catch::Matchers::ContainsSubstring("zero point density"));

  spec = two_object_spec();
  spec.objects[0].position = Vec::Constant(3, 3.9);  // box leaves the room
  REQUIRE_THROWS_AS(gmmcd::generate_pair(spec), gmmcd::Error);

  spec = two_object_spec();
  spec.noise_sigma = -0.1;
  REQUIRE_THROWS_AS(gmmcd::generate_pair(spec), gmmcd::Error);

  spec = two_object_spec();
  spec.objects[1].size[0] = 0.0;  // sphere radius
  REQUIRE_THROWS_AS(gmmcd::generate_pair(spec), gmmcd::Error);

  spec = two_object_spec();
  spec.room.max_corner = spec.room.min_corner;
  REQUIRE_THROWS_AS(gmmcd::generate_pair(spec), gmmcd::Error);

  spec = two_object_spec();
  spec.objects.clear();
  for (int i = 0; i < 65; ++i) {
    ObjectSpec tiny;
    tiny.shape = ObjectSpec::Shape::sphere;
    tiny.position = Vec::Constant(3, 2.0);
    tiny.size[0] = 0.01;
    spec.objects.push_back(tiny);
  }
  REQUIRE_THROWS_AS(gmmcd::generate_pair(spec), gmmcd::Error);
}
