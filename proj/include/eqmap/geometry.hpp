#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqmap/errors.hpp"

namespace eqmap {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw DataError("non-finite coordinate");
  }

  Vec2 operator+(const Vec2& o) const { return Vec2(x + o.x, y + o.y); }
  Vec2 operator-(const Vec2& o) const { return Vec2(x - o.x, y - o.y); }
  Vec2 operator*(double s) const { return Vec2(x * s, y * s); }
  double norm() const { return std::hypot(x, y); }
};

// wraps into (-pi, pi]
double normalize_angle(double a);

struct Pose {
  Vec2 position;
  double heading = 0.0;     // radians, CCW from +x
  bool degenerate = false;  // heading fallback fired
};

// 2x2 row-major
struct Mat2 {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  Vec2 apply(const Vec2& v) const { return Vec2(a * v.x + b * v.y, c * v.x + d * v.y); }
  Mat2 transpose() const { return Mat2{a, c, b, d}; }
  Mat2 mul(const Mat2& o) const {
    return Mat2{a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
};

Mat2 rotation_matrix(double theta);

// rigid motion p -> R(theta) p + t
struct RigidTransform {
  double theta = 0.0;
  Vec2 t;

  Vec2 apply(const Vec2& p) const { return rotation_matrix(theta).apply(p) + t; }

  double apply_heading(double h) const { return normalize_angle(h + theta); }

  RigidTransform compose(const RigidTransform& inner) const {
    // (this ∘ inner)(p) = R_this (R_inner p + t_inner) + t_this
    RigidTransform out;
    out.theta = normalize_angle(theta + inner.theta);
    out.t = rotation_matrix(theta).apply(inner.t) + t;
    return out;
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.theta = normalize_angle(-theta);
    out.t = rotation_matrix(-theta).apply(t) * -1.0;
    return out;
  }
};

struct LanePolyline {
  std::string id;
  std::vector<Vec2> points;
};

// finite-difference velocity at step t (dt = 1 frame); throws at t = 0
Vec2 displacement_velocity(const std::vector<Vec2>& track, int t);

// heading at step t from the displacement there; if its norm falls below eps
// the scan walks backward to the most recent step with norm >= eps, and when
// every step is degenerate the result is {0, true}.
struct HeadingResult {
  double heading = 0.0;
  bool degenerate = false;
};
HeadingResult heading(const std::vector<Vec2>& track, int t, double eps = 1e-9);

// q = R(-theta) (p - x): world point into the frame anchored at pose
Vec2 to_ego_frame(const Vec2& p, const Pose& ego);
// exact inverse: p = R(theta) q + x
Vec2 from_ego_frame(const Vec2& q, const Pose& ego);

std::vector<Vec2> to_ego_frame(const std::vector<Vec2>& pts, const Pose& ego);
std::vector<Vec2> from_ego_frame(const std::vector<Vec2>& pts, const Pose& ego);

std::vector<Vec2> apply_rigid(const std::vector<Vec2>& pts, const RigidTransform& g);

}  // namespace eqmap
