#include "eqmap/predictor.hpp"

#include <cmath>

#include "eqmap/errors.hpp"

namespace eqmap {

Tensor trajectory_tensor(const std::vector<Vec2>& pts) {
  std::vector<double> v;
  v.reserve(pts.size() * 2);
  for (const Vec2& p : pts) {
    v.push_back(p.x);
    v.push_back(p.y);
  }
  return constant({static_cast<int>(pts.size()), 2}, std::move(v));
}

Tensor decode(ModelContext& mc, const Tensor& G, int ego, const Vec2& ego_position,
              const RunConfig& cfg) {
  const int c = cfg.c_channels();
  Tensor gi = reshape(gather_axis0(G, {ego}), {c, 2});
  Tensor mean = scale(sum_axis0(gi), 1.0 / c);  // [2]
  Tensor x = add_rowvec(gi, scale(mean, -1.0));
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    const bool last = l == cfg.mlp_layers - 1;
    const int out_ch = last ? cfg.t_out : c;
    Tensor w = mc.param("dec/mix" + std::to_string(l), {out_ch, c}, c);
    x = matmul(w, x);
    if (!last) {
      Tensor norms = channel_norms(x);  // [c]
      Tensor g = mlp2(mc, reshape(norms, {c, 1}), 1, 8, 1, "dec/gate" + std::to_string(l));
      x = row_scale(x, reshape(scale(sigmoid(g), 2.0), {c}));
    }
  }
  Tensor traj = add_rowvec(x, mean);
  return add_rowvec(traj, constant({2}, {ego_position.x, ego_position.y}));
}

Tensor ade_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.shape != truth.shape || pred.ndim() != 2 || pred.shape[1] != 2)
    throw DataError("ade_loss: expected matching [T, 2] trajectories, got " +
                    shape_str(pred.shape) + " and " + shape_str(truth.shape));
  Tensor d = sub(pred, truth);
  Tensor dist = sqrt_eps(sum_last(mul(d, d)), 1e-12);
  return scale(sum_all(dist), 1.0 / pred.shape[0]);
}

void compute_metrics(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth, int rate_hz,
                     std::map<int, double>& ade, std::map<int, double>& fde) {
  if (pred.size() != truth.size())
    throw DataError("metrics: prediction has " + std::to_string(pred.size()) +
                    " steps but truth has " + std::to_string(truth.size()));
  const int t = static_cast<int>(truth.size());
  const std::vector<int> horizons{1, 2, 3};
  std::vector<int> computable;
  for (int h : horizons)
    if (h * rate_hz <= t) computable.push_back(h);
  if (computable.size() < horizons.size()) {
    std::string msg = "metrics: the 3 s horizon needs " + std::to_string(3 * rate_hz) +
                      " steps at " + std::to_string(rate_hz) + " hz but the trajectory has " +
                      std::to_string(t) + "; computable horizons:";
    if (computable.empty()) msg += " none";
    for (int h : computable) msg += " " + std::to_string(h) + "s";
    throw DataError(msg);
  }
  for (int h : horizons) {
    const int steps = h * rate_hz;
    double sum = 0.0;
    for (int i = 0; i < steps; ++i) sum += (pred[size_t(i)] - truth[size_t(i)]).norm();
    ade[h] = sum / steps;
    fde[h] = (pred[size_t(steps) - 1] - truth[size_t(steps) - 1]).norm();
  }
}

std::vector<Vec2> constant_velocity_baseline(const std::vector<Vec2>& history, int t_out) {
  if (history.size() < 2)
    throw DataError("constant velocity baseline needs at least 2 history steps, got " +
                    std::to_string(history.size()));
  const Vec2 last = history.back();
  const Vec2 v = last - history[history.size() - 2];
  std::vector<Vec2> out;
  out.reserve(size_t(t_out));
  for (int k = 1; k <= t_out; ++k) out.push_back(last + v * double(k));
  return out;
}

Pose ego_pose(const Scene& scene, const RunConfig& cfg) {
  const std::vector<Vec2>& track = scene.agents[size_t(scene.ego)];
  HeadingResult hr = heading(track, cfg.t_in - 1);
  Pose p;
  p.position = track.back();
  p.heading = hr.heading;
  p.degenerate = hr.degenerate;
  return p;
}

ForwardOut forward_model(ModelContext& mc, const Scene& scene, const RunConfig& cfg) {
  Pose pose = ego_pose(scene, cfg);
  ForwardOut out;
  out.report.scene_id = scene.id;
  if (pose.degenerate && cfg.map_mode == MapMode::TranslateRotate)
    out.report.warning = "degenerate ego heading; identity rotation used";
  MapContext ctx = encode_map(mc, scene, pose, cfg);
  FeatureBundle fb = fuse_features(mc, scene, pose.position, ctx, cfg);
  Features f = run_backbone(mc, fb, cfg);
  out.pred = decode(mc, f.G, scene.ego, pose.position, cfg);
  const std::vector<double>& v = out.pred.vals();
  for (double x : v)
    if (!std::isfinite(x)) throw DataError("non-finite prediction for scene " + scene.id);
  out.report.predicted.reserve(size_t(cfg.t_out));
  for (int t = 0; t < cfg.t_out; ++t)
    out.report.predicted.emplace_back(v[size_t(2 * t)], v[size_t(2 * t) + 1]);
  if (!scene.ego_future.empty())
    compute_metrics(out.report.predicted, scene.ego_future, cfg.rate_hz, out.report.ade,
                    out.report.fde);
  return out;
}

std::string report_line(const PredictionReport& r) {
  std::string s = r.scene_id;
  for (const Vec2& p : r.predicted) {
    s += " " + fmt9(p.x);
    s += " " + fmt9(p.y);
  }
  if (!r.ade.empty()) {
    for (int h : {1, 2, 3}) s += " " + fmt9(r.ade.at(h));
    for (int h : {1, 2, 3}) s += " " + fmt9(r.fde.at(h));
  }
  return s;
}

}  // namespace eqmap
