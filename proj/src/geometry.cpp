#include "eqmap/geometry.hpp"

namespace eqmap {

double normalize_angle(double a) {
  if (!std::isfinite(a)) throw DataError("non-finite angle");
  double two_pi = 6.283185307179586476925287;
  double r = std::fmod(a, two_pi);
  if (r <= -3.141592653589793238462643) r += two_pi;
  if (r > 3.141592653589793238462643) r -= two_pi;
  return r;
}

Mat2 rotation_matrix(double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  return Mat2{c, -s, s, c};
}

Vec2 displacement_velocity(const std::vector<Vec2>& track, int t) {
  if (t <= 0 || t >= static_cast<int>(track.size()))
    throw DataError("displacement_velocity: no predecessor step");
  return track[static_cast<size_t>(t)] - track[static_cast<size_t>(t) - 1];
}

HeadingResult heading(const std::vector<Vec2>& track, int t, double eps) {
  if (t < 1 || t >= static_cast<int>(track.size()))
    throw DataError("heading: no predecessor step");
  for (int s = t; s >= 1; --s) {
    Vec2 d = track[static_cast<size_t>(s)] - track[static_cast<size_t>(s) - 1];
    if (d.norm() >= eps) return HeadingResult{std::atan2(d.y, d.x), false};
  }
  return HeadingResult{0.0, true};
}

Vec2 to_ego_frame(const Vec2& p, const Pose& ego) {
  double c = std::cos(ego.heading), s = std::sin(ego.heading);
  double dx = p.x - ego.position.x, dy = p.y - ego.position.y;
  return Vec2(c * dx + s * dy, -s * dx + c * dy);
}

Vec2 from_ego_frame(const Vec2& q, const Pose& ego) {
  double c = std::cos(ego.heading), s = std::sin(ego.heading);
  return Vec2(c * q.x - s * q.y + ego.position.x, s * q.x + c * q.y + ego.position.y);
}

std::vector<Vec2> to_ego_frame(const std::vector<Vec2>& pts, const Pose& ego) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) out.push_back(to_ego_frame(p, ego));
  return out;
}

std::vector<Vec2> from_ego_frame(const std::vector<Vec2>& pts, const Pose& ego) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& q : pts) out.push_back(from_ego_frame(q, ego));
  return out;
}

std::vector<Vec2> apply_rigid(const std::vector<Vec2>& pts, const RigidTransform& g) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) out.push_back(g.apply(p));
  return out;
}

}  // namespace eqmap
