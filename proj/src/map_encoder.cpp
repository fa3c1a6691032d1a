#include "eqmap/map_encoder.hpp"

#include <cmath>
#include <limits>

namespace eqmap {

namespace {

Tensor mask_tensor(const std::vector<char>& mask) {
  std::vector<double> m(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) m[i] = mask[i] ? 1.0 : 0.0;
  return constant({static_cast<int>(mask.size())}, std::move(m));
}

int valid_count(const std::vector<char>& mask) {
  int n = 0;
  for (char c : mask) n += c ? 1 : 0;
  return n;
}

}  // namespace

TokenSequence vectorize_map(ModelContext& mc, const std::vector<LanePolyline>& ego_lanes,
                            const std::vector<bool>& lane_valid, const RunConfig& cfg) {
  const int T = cfg.tokens();
  std::vector<double> coords(static_cast<size_t>(T) * 2, 0.0);
  std::vector<char> mask(static_cast<size_t>(T), 0);
  for (int q = 0; q < cfg.q_lanes; ++q) {
    if (!lane_valid[static_cast<size_t>(q)]) continue;
    const auto& pts = ego_lanes[static_cast<size_t>(q)].points;
    for (int j = 0; j < cfg.l_points; ++j) {
      size_t tok = static_cast<size_t>(q * cfg.l_points + j);
      coords[tok * 2] = pts[static_cast<size_t>(j)].x;
      coords[tok * 2 + 1] = pts[static_cast<size_t>(j)].y;
      mask[tok] = 1;
    }
  }
  Tensor xy = constant({T, 2}, std::move(coords));
  Tensor w = mc.param("enc/embed/w", {2, cfg.d_model()}, 2);
  Tensor b = mc.param("enc/embed/b", {cfg.d_model()}, 0, Init::Zeros);
  Tensor tokens = add_rowvec(matmul(xy, w), b);
  tokens = row_scale(tokens, mask_tensor(mask));
  return TokenSequence{tokens, mask};
}

Tensor mha(ModelContext& mc, const Tensor& x, const std::vector<char>& mask, int n_heads, int d_k,
           const std::string& prefix) {
  const int T = x.shape[0];
  const int d = x.shape[1];
  std::vector<double> am(static_cast<size_t>(T) * static_cast<size_t>(T));
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      am[static_cast<size_t>(i * T + j)] = mask[static_cast<size_t>(j)] ? 0.0 : ninf;
  Tensor add_mask = constant({T, T}, std::move(am));

  std::vector<Tensor> heads;
  for (int h = 0; h < n_heads; ++h) {
    std::string hp = prefix + "/h" + std::to_string(h);
    Tensor wq = mc.param(hp + "/wq", {d, d_k}, d);
    Tensor wk = mc.param(hp + "/wk", {d, d_k}, d);
    Tensor wv = mc.param(hp + "/wv", {d, d_k}, d);
    Tensor q = matmul(x, wq);
    Tensor k = matmul(x, wk);
    Tensor v = matmul(x, wv);
    Tensor scores = scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(d_k)));
    Tensor w = softmax(scores, -1, &add_mask);
    heads.push_back(matmul(w, v));
  }
  Tensor cat = n_heads == 1 ? heads[0] : concat_last(heads);
  Tensor wo = mc.param(prefix + "/wo", {d, d}, d);
  return matmul(cat, wo);
}

TokenSequence attention_block(ModelContext& mc, const TokenSequence& seq, const RunConfig& cfg) {
  if (valid_count(seq.mask) == 0) throw DataError("empty map with attention requested");
  Tensor out = mha(mc, seq.tokens, seq.mask, cfg.heads, cfg.d_k(), "enc/attn");
  Tensor res = add(seq.tokens, out);
  Tensor gamma = mc.param("enc/attn/ln/gamma", {cfg.d_model()}, 0, Init::Ones);
  Tensor beta = mc.param("enc/attn/ln/beta", {cfg.d_model()}, 0, Init::Zeros);
  Tensor normed = layer_norm(res, gamma, beta, 1e-5);
  return TokenSequence{row_scale(normed, mask_tensor(seq.mask)), seq.mask};
}

TokenSequence ffn_block(ModelContext& mc, const TokenSequence& seq, const RunConfig& cfg) {
  const int d = cfg.d_model(), f = cfg.d_ff();
  Tensor w1 = mc.param("enc/ffn/w1", {d, f}, d);
  Tensor b1 = mc.param("enc/ffn/b1", {f}, 0, Init::Zeros);
  Tensor w2 = mc.param("enc/ffn/w2", {f, d}, f);
  Tensor b2 = mc.param("enc/ffn/b2", {d}, 0, Init::Zeros);
  Tensor h = relu(add_rowvec(matmul(seq.tokens, w1), b1));
  Tensor out = add_rowvec(matmul(h, w2), b2);
  Tensor res = add(seq.tokens, out);
  Tensor gamma = mc.param("enc/ffn/ln/gamma", {d}, 0, Init::Ones);
  Tensor beta = mc.param("enc/ffn/ln/beta", {d}, 0, Init::Zeros);
  Tensor normed = layer_norm(res, gamma, beta, 1e-5);
  return TokenSequence{row_scale(normed, mask_tensor(seq.mask)), seq.mask};
}

TokenSequence single_attention_encoder(ModelContext& mc, const TokenSequence& seq,
                                       const RunConfig& cfg) {
  if (valid_count(seq.mask) == 0) throw DataError("empty map with attention requested");
  Tensor out = mha(mc, seq.tokens, seq.mask, 1, cfg.d_model(), "enc/sattn");
  Tensor res = add(seq.tokens, out);
  return TokenSequence{row_scale(res, mask_tensor(seq.mask)), seq.mask};
}

MapContext pool_context(ModelContext& mc, const TokenSequence& seq, const RunConfig& cfg) {
  int n = valid_count(seq.mask);
  if (n == 0) return MapContext{full({cfg.d_ctx()}, 0.0)};
  Tensor masked = row_scale(seq.tokens, mask_tensor(seq.mask));
  Tensor mean = scale(sum_axis0(masked), 1.0 / static_cast<double>(n));
  Tensor w = mc.param("enc/pool/w", {cfg.d_model(), cfg.d_ctx()}, cfg.d_model());
  Tensor ctx = matmul(reshape(mean, {1, cfg.d_model()}), w);
  return MapContext{reshape(ctx, {cfg.d_ctx()})};
}

MapContext encode_map(ModelContext& mc, const Scene& scene, const Pose& ego_pose,
                      const RunConfig& cfg) {
  if (cfg.map_mode == MapMode::None) return MapContext{full({cfg.d_ctx()}, 0.0)};
  bool any = false;
  for (bool v : scene.lane_valid) any = any || v;
  if (!any) return MapContext{full({cfg.d_ctx()}, 0.0)};

  std::vector<LanePolyline> ego_lanes(scene.lanes.size());
  for (size_t q = 0; q < scene.lanes.size(); ++q) {
    if (!scene.lane_valid[q]) continue;
    ego_lanes[q].id = scene.lanes[q].id;
    if (cfg.map_mode == MapMode::TranslateOnly) {
      for (const Vec2& p : scene.lanes[q].points) ego_lanes[q].points.push_back(p - ego_pose.position);
    } else {
      ego_lanes[q].points = to_ego_frame(scene.lanes[q].points, ego_pose);
    }
  }

  TokenSequence seq = vectorize_map(mc, ego_lanes, scene.lane_valid, cfg);
  switch (cfg.encoder_kind) {
    case EncoderKind::Transformer:
      seq = attention_block(mc, seq, cfg);
      seq = ffn_block(mc, seq, cfg);
      break;
    case EncoderKind::SingleAttention:
      seq = single_attention_encoder(mc, seq, cfg);
      break;
    case EncoderKind::None:
      break;
  }
  return pool_context(mc, seq, cfg);
}

FeatureBundle fuse_features(ModelContext& mc, const Scene& scene, const Vec2& ego_position,
                            const MapContext& ctx, const RunConfig& cfg) {
  (void)mc;
  const int N = cfg.n_agents, T = cfg.t_in;
  std::vector<double> geo(static_cast<size_t>(N) * static_cast<size_t>(T) * 2, 0.0);
  std::vector<char> mask(static_cast<size_t>(N), 0);
  for (int i = 0; i < N; ++i) {
    if (!scene.agent_valid[static_cast<size_t>(i)]) continue;
    mask[static_cast<size_t>(i)] = 1;
    for (int t = 0; t < T; ++t) {
      Vec2 p = scene.agents[static_cast<size_t>(i)][static_cast<size_t>(t)] - ego_position;
      geo[(static_cast<size_t>(i) * static_cast<size_t>(T) + static_cast<size_t>(t)) * 2] = p.x;
      geo[(static_cast<size_t>(i) * static_cast<size_t>(T) + static_cast<size_t>(t)) * 2 + 1] = p.y;
    }
  }
  Tensor geo_t = constant({N, T, 2}, std::move(geo));

  // displacement operator: row t maps points t and t+1 to their difference
  std::vector<double> dm(static_cast<size_t>(T - 1) * static_cast<size_t>(T), 0.0);
  for (int t = 0; t < T - 1; ++t) {
    dm[static_cast<size_t>(t * T + t)] = -1.0;
    dm[static_cast<size_t>(t * T + t + 1)] = 1.0;
  }
  Tensor diff_op = constant({T - 1, T}, std::move(dm));
  Tensor disp = matmul(diff_op, geo_t);                            // [N, T-1, 2]
  Tensor speeds = sqrt_eps(sum_last(mul(disp, disp)), 1e-12);      // [N, T-1]

  Tensor ones_col = full({N, 1}, 1.0);
  Tensor ctx_rows = matmul(ones_col, reshape(ctx.context, {1, cfg.d_ctx()}));  // [N, d_ctx]
  Tensor inv = concat_last({speeds, ctx_rows});
  inv = row_scale(inv, mask_tensor(mask));

  return FeatureBundle{geo_t, inv, mask, scene.ego};
}

}  // namespace eqmap
