#include <cmath>

#include "doctest.h"
#include "eqmap/geometry.hpp"
#include "eqmap/rng.hpp"

using namespace eqmap;

namespace {
const double kPi = 3.14159265358979323846;

Pose rand_pose(Rng& rng) {
  Pose p;
  p.position = Vec2(rng.uniform(-200, 200), rng.uniform(-200, 200));
  p.heading = rng.uniform(-kPi, kPi);
  return p;
}

RigidTransform rand_rigid(Rng& rng, double t_max = 1000.0) {
  RigidTransform g;
  g.theta = rng.uniform(0.0, 2 * kPi);
  const double dir = rng.uniform(0.0, 2 * kPi);
  const double mag = rng.uniform(0.0, t_max);
  g.t = Vec2(mag * std::cos(dir), mag * std::sin(dir));
  return g;
}
}  // namespace

TEST_CASE("Vec2 rejects non-finite coordinates") {
  CHECK_THROWS_AS(Vec2(std::nan(""), 0.0), DataError);
  CHECK_THROWS_AS(Vec2(0.0, INFINITY), DataError);
  CHECK_NOTHROW(Vec2(1e300, -1e300));
}

TEST_CASE("normalize_angle lands in (-pi, pi]") {
  CHECK(normalize_angle(kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(3 * kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(0.5) == doctest::Approx(0.5));
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-50, 50);
    const double n = normalize_angle(a);
    CHECK(n > -kPi - 1e-12);
    CHECK(n <= kPi + 1e-12);
    CHECK(std::fabs(std::sin(n) - std::sin(a)) < 1e-9);
    CHECK(std::fabs(std::cos(n) - std::cos(a)) < 1e-9);
  }
}

TEST_CASE("rotation matrices compose like their angles") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-6, 6), b = rng.uniform(-6, 6);
    const Mat2 ab = rotation_matrix(a).mul(rotation_matrix(b));
    const Mat2 s = rotation_matrix(a + b);
    CHECK(std::fabs(ab.a - s.a) < 1e-12);
    CHECK(std::fabs(ab.b - s.b) < 1e-12);
    CHECK(std::fabs(ab.c - s.c) < 1e-12);
    CHECK(std::fabs(ab.d - s.d) < 1e-12);
  }
}

TEST_CASE("rigid transforms invert and compose") {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    const RigidTransform g = rand_rigid(rng);
    const RigidTransform h = rand_rigid(rng);
    const Vec2 p(rng.uniform(-100, 100), rng.uniform(-100, 100));
    const Vec2 back = g.inverse().apply(g.apply(p));
    CHECK((back - p).norm() < 1e-9);
    const Vec2 lhs = g.compose(h).apply(p);
    const Vec2 rhs = g.apply(h.apply(p));
    CHECK((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("displacement velocity is the one-frame difference") {
  std::vector<Vec2> track{{0, 0}, {1, 2}, {4, 6}};
  Vec2 v = displacement_velocity(track, 1);
  CHECK(v.x == doctest::Approx(1));
  CHECK(v.y == doctest::Approx(2));
  v = displacement_velocity(track, 2);
  CHECK(v.x == doctest::Approx(3));
  CHECK(v.y == doctest::Approx(4));
  CHECK_THROWS_AS(displacement_velocity(track, 0), DataError);
  CHECK_THROWS_AS(displacement_velocity(track, 3), DataError);
}

TEST_CASE("heading follows the displacement and falls back when stationary") {
  std::vector<Vec2> track{{0, 0}, {1, 0}, {1, 1}};
  CHECK(heading(track, 1).heading == doctest::Approx(0.0));
  CHECK(heading(track, 2).heading == doctest::Approx(kPi / 2));
  CHECK_FALSE(heading(track, 2).degenerate);

  // stationary tail scans back to the last moving step
  std::vector<Vec2> stall{{0, 0}, {0, 1}, {0, 1}, {0, 1}};
  HeadingResult hr = heading(stall, 3);
  CHECK(hr.heading == doctest::Approx(kPi / 2));
  CHECK_FALSE(hr.degenerate);

  // sub-eps jitter still counts as stationary
  std::vector<Vec2> jitter{{0, 0}, {1, 0}, {1 + 1e-12, 0}};
  hr = heading(jitter, 2);
  CHECK(hr.heading == doctest::Approx(0.0));
  CHECK_FALSE(hr.degenerate);

  std::vector<Vec2> frozen{{2, 3}, {2, 3}, {2, 3}};
  hr = heading(frozen, 2);
  CHECK(hr.degenerate);
  CHECK(hr.heading == 0.0);

  CHECK_THROWS_AS(heading(track, 0), DataError);
  CHECK_THROWS_AS(heading(track, 3), DataError);
}

TEST_CASE("ego frame round trip") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    Pose pose = rand_pose(rng);
    const Vec2 p(rng.uniform(-300, 300), rng.uniform(-300, 300));
    const Vec2 back = from_ego_frame(to_ego_frame(p, pose), pose);
    CHECK((back - p).norm() < 1e-9);
  }
}

TEST_CASE("ego frame axes") {
  // ego at origin facing +y: a point straight ahead lands on +x of the ego
  // frame, a point to the east lands on -y (its right-hand side)
  Pose pose;
  pose.heading = kPi / 2;
  Vec2 ahead = to_ego_frame(Vec2(0, 2), pose);
  CHECK(ahead.x == doctest::Approx(2));
  CHECK(ahead.y == doctest::Approx(0).epsilon(1e-12));
  Vec2 east = to_ego_frame(Vec2(1, 0), pose);
  CHECK(east.x == doctest::Approx(0).epsilon(1e-12));
  CHECK(east.y == doctest::Approx(-1));
}

TEST_CASE("joint rigid motion leaves ego-frame coordinates invariant") {
  // the property behind the whole map pipeline, fuzzed over poses, points and
  // transforms with translations up to 1 km
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Pose pose = rand_pose(rng);
    const Vec2 m(rng.uniform(-300, 300), rng.uniform(-300, 300));
    const RigidTransform g = rand_rigid(rng);
    Pose moved;
    moved.position = g.apply(pose.position);
    moved.heading = g.apply_heading(pose.heading);
    const Vec2 q0 = to_ego_frame(m, pose);
    const Vec2 q1 = to_ego_frame(g.apply(m), moved);
    worst = std::max(worst, (q1 - q0).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("list form matches the point form elementwise") {
  Rng rng(5);
  Pose pose = rand_pose(rng);
  std::vector<Vec2> pts;
  for (int i = 0; i < 40; ++i) pts.emplace_back(rng.uniform(-50, 50), rng.uniform(-50, 50));
  std::vector<Vec2> ego = to_ego_frame(pts, pose);
  std::vector<Vec2> back = from_ego_frame(ego, pose);
  REQUIRE(ego.size() == pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK((ego[i] - to_ego_frame(pts[i], pose)).norm() == 0.0);
    CHECK((back[i] - pts[i]).norm() < 1e-9);
  }
}

TEST_CASE("apply_rigid maps every point") {
  RigidTransform g;
  g.theta = kPi;
  g.t = Vec2(1, 1);
  std::vector<Vec2> pts{{1, 0}, {0, 1}};
  std::vector<Vec2> out = apply_rigid(pts, g);
  CHECK(out[0].x == doctest::Approx(0));
  CHECK(out[0].y == doctest::Approx(1));
  CHECK(out[1].x == doctest::Approx(1));
  CHECK(out[1].y == doctest::Approx(0));
}
