#include "eqmap/synth.hpp"

#include <cmath>
#include <cstdio>

#include "eqmap/rng.hpp"

namespace eqmap {

namespace {

// point on the arc that starts at `start` with tangent angle theta0 and
// signed curvature kappa, after arclength s, displaced `lateral` along the
// left normal
Vec2 arc_point(const Vec2& start, double theta0, double kappa, double s, double lateral) {
  double th;
  Vec2 base;
  if (std::abs(kappa) < 1e-12) {
    th = theta0;
    base = Vec2(start.x + s * std::cos(theta0), start.y + s * std::sin(theta0));
  } else {
    th = theta0 + kappa * s;
    double r = 1.0 / kappa;
    Vec2 center(start.x - r * std::sin(theta0), start.y + r * std::cos(theta0));
    base = Vec2(center.x + r * std::sin(th), center.y - r * std::cos(th));
  }
  return Vec2(base.x - lateral * std::sin(th), base.y + lateral * std::cos(th));
}

std::vector<Vec2> quantize(const std::vector<Vec2>& pts) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) out.push_back(Vec2(quantize9(p.x), quantize9(p.y)));
  return out;
}

}  // namespace

Scene synth_scene(const RunConfig& cfg, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "scene_%06d", index);
  Rng rng = Rng(cfg.seed).fork(std::string("scene/") + name);

  const double len = cfg.lane_length_m;
  const double dt = 1.0 / static_cast<double>(cfg.rate_hz);
  const Vec2 start(rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0));
  const double theta0 = rng.uniform(-3.14159265358979324, 3.14159265358979324);
  double kappa = rng.uniform(cfg.curvature_min, cfg.curvature_max);
  if (rng.next_bool()) kappa = -kappa;

  RawScene raw;
  raw.id = name;

  // Q concentric lanes: centerline first, then alternating lateral offsets
  std::vector<double> offsets;
  for (int q = 0; q < cfg.q_lanes; ++q) {
    int level = (q + 1) / 2;
    double d = 3.5 * static_cast<double>(level);
    offsets.push_back(q == 0 ? 0.0 : (q % 2 == 1 ? d : -d));
  }
  for (int q = 0; q < cfg.q_lanes; ++q) {
    LanePolyline lane;
    char lid[16];
    std::snprintf(lid, sizeof(lid), "l%d", q);
    lane.id = lid;
    double step = len / static_cast<double>(cfg.l_points - 1);
    for (int j = 0; j < cfg.l_points; ++j)
      lane.points.push_back(arc_point(start, theta0, kappa, step * static_cast<double>(j),
                                      offsets[static_cast<size_t>(q)]));
    raw.lanes.push_back(std::move(lane));
  }

  auto track = [&](double s_now, double speed, double lateral, int from, int to) {
    // samples for t in [from, to], t=0 being "now"
    std::vector<Vec2> pts;
    for (int t = from; t <= to; ++t) {
      double s = s_now + speed * dt * static_cast<double>(t);
      double lat = lateral + rng.normal() * cfg.noise_sigma;
      pts.push_back(arc_point(start, theta0, kappa, s, lat));
    }
    return pts;
  };

  // keep history behind and future ahead inside the lane extent
  const double s_ego = len * rng.uniform(0.3, 0.55);
  const double ego_speed = rng.uniform(cfg.speed_min, cfg.speed_max);
  RawAgent ego;
  ego.id = "a0";
  ego.is_ego = true;
  ego.history = track(s_ego, ego_speed, 0.0, -(cfg.t_in - 1), 0);
  ego.future = track(s_ego, ego_speed, 0.0, 1, cfg.t_out);
  raw.agents.push_back(std::move(ego));

  int n_neighbors = cfg.n_agents >= 2 ? 1 + rng.next_int(cfg.n_agents - 1) : 0;
  for (int a = 0; a < n_neighbors; ++a) {
    RawAgent nb;
    char aid[16];
    std::snprintf(aid, sizeof(aid), "a%d", a + 1);
    nb.id = aid;
    int lane_idx = cfg.q_lanes > 1 ? 1 + (a % (cfg.q_lanes - 1)) : 0;
    double lateral = offsets[static_cast<size_t>(lane_idx)];
    double s_nb = s_ego + rng.uniform(-15.0, 15.0);
    double sp = rng.uniform(cfg.speed_min, cfg.speed_max);
    nb.history = track(s_nb, sp, lateral, -(cfg.t_in - 1), 0);
    raw.agents.push_back(std::move(nb));
  }

  for (RawAgent& a : raw.agents) {
    a.history = quantize(a.history);
    a.future = quantize(a.future);
  }
  for (LanePolyline& l : raw.lanes) l.points = quantize(l.points);

  return pad_scene(raw, dims_from(cfg));
}

SplitResult synth_generate(const RunConfig& cfg) {
  SplitResult out;
  int idx = 0;
  for (int i = 0; i < cfg.count_train; ++i) out.train.push_back(synth_scene(cfg, idx++));
  for (int i = 0; i < cfg.count_val; ++i) out.val.push_back(synth_scene(cfg, idx++));
  for (int i = 0; i < cfg.count_test; ++i) out.test.push_back(synth_scene(cfg, idx++));
  return out;
}

}  // namespace eqmap
