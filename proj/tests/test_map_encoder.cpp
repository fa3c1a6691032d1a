#include <cmath>

#include "doctest.h"
#include "eqmap/map_encoder.hpp"
#include "eqmap/rng.hpp"
#include "oracles.hpp"

using namespace eqmap;

namespace {

RunConfig small_cfg() {
  RunConfig c;
  apply_preset(c, "desk");
  c.t_in = 4;
  c.t_out = 3;
  c.n_agents = 2;
  c.q_lanes = 2;
  c.l_points = 3;
  c.p_repeats = 1;
  c.hidden_dim = 8;
  c.heads = 2;
  validate(c);
  return c;
}

LanePolyline lane_at(const std::string& id, double x0, double y0, int l_points) {
  LanePolyline l;
  l.id = id;
  for (int j = 0; j < l_points; ++j) l.points.push_back(Vec2(x0 + 4.0 * j, y0 + 0.3 * j));
  return l;
}

Scene small_scene(const RunConfig& cfg) {
  Scene s;
  s.id = "enc_scene";
  s.ego = 0;
  s.agent_ids = {"ego", "n1"};
  s.agent_valid = {true, true};
  s.agents.resize(2);
  for (int t = 0; t < cfg.t_in; ++t) {
    s.agents[0].push_back(Vec2(2.0 * t, 6.0 + 0.1 * t));
    s.agents[1].push_back(Vec2(5.0 - t, -3.0 + 0.5 * t));
  }
  s.lanes = {lane_at("la", -10.0, 2.0, cfg.l_points), lane_at("lb", 3.0, -8.0, cfg.l_points)};
  s.lane_valid = {true, true};
  for (int t = 0; t < cfg.t_out; ++t) s.ego_future.push_back(Vec2(2.0 * (cfg.t_in + t), 7.0));
  return s;
}

// plain-loop reference for mha(): per-head projections, masked softmax,
// concat, output mix
std::vector<double> mha_oracle(const ParameterStore& store, const std::vector<double>& x, int T,
                               int d, const std::vector<char>& mask, int n_heads, int d_k,
                               const std::string& prefix) {
  std::vector<double> cat(size_t(T) * size_t(n_heads) * size_t(d_k));
  for (int h = 0; h < n_heads; ++h) {
    std::string hp = prefix + "/h" + std::to_string(h);
    const auto& wq = store.params.at(hp + "/wq").value;
    const auto& wk = store.params.at(hp + "/wk").value;
    const auto& wv = store.params.at(hp + "/wv").value;
    auto q = oracle::matmul2d(x, T, d, wq, d_k);
    auto k = oracle::matmul2d(x, T, d, wk, d_k);
    auto v = oracle::matmul2d(x, T, d, wv, d_k);
    for (int i = 0; i < T; ++i) {
      std::vector<double> row(static_cast<size_t>(T), 0.0);
      for (int j = 0; j < T; ++j) {
        long double acc = 0;
        for (int c = 0; c < d_k; ++c)
          acc += (long double)q[size_t(i) * d_k + c] * (long double)k[size_t(j) * d_k + c];
        row[size_t(j)] = double(acc / sqrtl((long double)d_k));
      }
      auto w = oracle::softmax_row(row, &mask);
      for (int c = 0; c < d_k; ++c) {
        long double acc = 0;
        for (int j = 0; j < T; ++j)
          acc += (long double)w[size_t(j)] * (long double)v[size_t(j) * d_k + c];
        cat[size_t(i) * size_t(n_heads) * size_t(d_k) + size_t(h) * size_t(d_k) + size_t(c)] =
            double(acc);
      }
    }
  }
  const auto& wo = store.params.at(prefix + "/wo").value;
  return oracle::matmul2d(cat, T, n_heads * d_k, wo, d);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("map tokens embed lane points and padding stays zero") {
  RunConfig cfg = small_cfg();
  ParameterStore store;
  store.seed = 5;
  ModelContext mc(store, nullptr);

  std::vector<LanePolyline> lanes = {lane_at("la", 1.0, -2.0, cfg.l_points), LanePolyline{}};
  lanes[1].points.assign(size_t(cfg.l_points), Vec2());
  std::vector<bool> valid = {true, false};

  TokenSequence seq = vectorize_map(mc, lanes, valid, cfg);
  REQUIRE(seq.tokens.shape == Shape{6, 8});
  CHECK(seq.mask == std::vector<char>{1, 1, 1, 0, 0, 0});

  const auto& w = store.params.at("enc/embed/w").value;  // [2, d_model]
  const auto& b = store.params.at("enc/embed/b").value;
  for (int j = 0; j < cfg.l_points; ++j) {
    for (int c = 0; c < cfg.d_model(); ++c) {
      double want = lanes[0].points[size_t(j)].x * w[size_t(c)] +
                    lanes[0].points[size_t(j)].y * w[size_t(cfg.d_model() + c)] + b[size_t(c)];
      CHECK(seq.tokens.at(size_t(j * cfg.d_model() + c)) ==
            doctest::Approx(want).epsilon(1e-14));
    }
  }
  for (size_t i = size_t(3 * cfg.d_model()); i < seq.tokens.size(); ++i)
    CHECK(seq.tokens.at(i) == 0.0);
}

TEST_CASE("attention and ffn blocks keep masked tokens at exact zero") {
  RunConfig cfg = small_cfg();
  ParameterStore store;
  store.seed = 6;
  ModelContext mc(store, nullptr);

  std::vector<LanePolyline> lanes = {lane_at("la", 1.0, -2.0, cfg.l_points), LanePolyline{}};
  lanes[1].points.assign(size_t(cfg.l_points), Vec2());
  TokenSequence seq = vectorize_map(mc, lanes, {true, false}, cfg);

  TokenSequence a = attention_block(mc, seq, cfg);
  REQUIRE(a.tokens.shape == seq.tokens.shape);
  CHECK(a.mask == seq.mask);
  double live = 0;
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 8; ++c) {
      double v = a.tokens.at(size_t(i * 8 + c));
      if (i >= 3) CHECK(v == 0.0);
      live = std::max(live, std::fabs(v));
    }
  CHECK(live > 0.0);

  TokenSequence f = ffn_block(mc, a, cfg);
  REQUIRE(f.tokens.shape == seq.tokens.shape);
  for (int i = 3; i < 6; ++i)
    for (int c = 0; c < 8; ++c) CHECK(f.tokens.at(size_t(i * 8 + c)) == 0.0);

  TokenSequence dead{full({6, 8}, 0.0), std::vector<char>(6, 0)};
  CHECK_THROWS_WITH_AS(attention_block(mc, dead, cfg), "empty map with attention requested",
                       DataError);
  CHECK_THROWS_WITH_AS(single_attention_encoder(mc, dead, cfg),
                       "empty map with attention requested", DataError);
}

TEST_CASE("multi-head attention matches a plain loop") {
  ParameterStore store;
  store.seed = 77;
  ModelContext mc(store, nullptr);
  Rng rng(3);

  const int T = 5, d = 8, heads = 2, dk = 4;
  std::vector<double> xv = oracle::rand_vec(rng, size_t(T) * size_t(d), -2.0, 2.0);
  std::vector<char> mask = {1, 1, 0, 1, 1};
  Tensor x = constant({T, d}, xv);

  Tensor out = mha(mc, x, mask, heads, dk, "enc/attn");
  REQUIRE(out.shape == Shape{T, d});
  auto want = mha_oracle(store, xv, T, d, mask, heads, dk, "enc/attn");
  CHECK(max_abs_diff(out.vals(), want) < 1e-12);

  // single-head path reuses the same core
  ParameterStore store1;
  store1.seed = 78;
  ModelContext mc1(store1, nullptr);
  Tensor out1 = mha(mc1, x, mask, 1, d, "enc/sattn");
  auto want1 = mha_oracle(store1, xv, T, d, mask, 1, d, "enc/sattn");
  CHECK(max_abs_diff(out1.vals(), want1) < 1e-12);
}

TEST_CASE("single attention encoder is residual attention with masking") {
  RunConfig cfg = small_cfg();
  ParameterStore store;
  store.seed = 9;
  ModelContext mc(store, nullptr);

  std::vector<LanePolyline> lanes = {lane_at("la", 0.5, 1.5, cfg.l_points), LanePolyline{}};
  lanes[1].points.assign(size_t(cfg.l_points), Vec2());
  TokenSequence seq = vectorize_map(mc, lanes, {true, false}, cfg);

  TokenSequence out = single_attention_encoder(mc, seq, cfg);
  auto att = mha_oracle(store, seq.tokens.vals(), cfg.tokens(), cfg.d_model(), seq.mask, 1,
                        cfg.d_model(), "enc/sattn");
  for (int i = 0; i < cfg.tokens(); ++i)
    for (int c = 0; c < cfg.d_model(); ++c) {
      size_t k = size_t(i * cfg.d_model() + c);
      double want = seq.mask[size_t(i)] ? seq.tokens.at(k) + att[k] : 0.0;
      CHECK(out.tokens.at(k) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("pool context averages the valid tokens") {
  RunConfig cfg = small_cfg();
  ParameterStore store;
  store.seed = 15;
  ModelContext mc(store, nullptr);

  std::vector<LanePolyline> lanes = {lane_at("la", 2.0, -1.0, cfg.l_points), LanePolyline{}};
  lanes[1].points.assign(size_t(cfg.l_points), Vec2());
  TokenSequence seq = vectorize_map(mc, lanes, {true, false}, cfg);

  MapContext ctx = pool_context(mc, seq, cfg);
  REQUIRE(ctx.context.shape == Shape{cfg.d_ctx()});

  const int n = 3;
  std::vector<double> mean(size_t(cfg.d_model()), 0.0);
  for (int i = 0; i < cfg.tokens(); ++i) {
    if (!seq.mask[size_t(i)]) continue;
    for (int c = 0; c < cfg.d_model(); ++c)
      mean[size_t(c)] += seq.tokens.at(size_t(i * cfg.d_model() + c));
  }
  for (double& v : mean) v /= n;
  const auto& w = store.params.at("enc/pool/w").value;
  auto want = oracle::matmul2d(mean, 1, cfg.d_model(), w, cfg.d_ctx());
  CHECK(max_abs_diff(ctx.context.vals(), want) < 1e-12);

  // an empty map pools to zero without inventing parameters
  ParameterStore empty_store;
  empty_store.seed = 15;
  ModelContext mc2(empty_store, nullptr);
  TokenSequence dead{full({cfg.tokens(), cfg.d_model()}, 0.0),
                     std::vector<char>(size_t(cfg.tokens()), 0)};
  MapContext zero = pool_context(mc2, dead, cfg);
  for (size_t i = 0; i < zero.context.size(); ++i) CHECK(zero.context.at(i) == 0.0);
  CHECK(empty_store.params.empty());
}

TEST_CASE("encode_map honors map mode and lane validity") {
  RunConfig cfg = small_cfg();
  Scene s = small_scene(cfg);
  Pose pose{Vec2(6.0, 6.3), 0.0, false};

  {
    RunConfig off = cfg;
    off.map_mode = MapMode::None;
    ParameterStore store;
    store.seed = 4;
    ModelContext mc(store, nullptr);
    MapContext ctx = encode_map(mc, s, pose, off);
    for (size_t i = 0; i < ctx.context.size(); ++i) CHECK(ctx.context.at(i) == 0.0);
    CHECK(store.params.empty());
  }
  {
    Scene bare = s;
    bare.lane_valid = {false, false};
    ParameterStore store;
    store.seed = 4;
    ModelContext mc(store, nullptr);
    MapContext ctx = encode_map(mc, bare, pose, cfg);
    for (size_t i = 0; i < ctx.context.size(); ++i) CHECK(ctx.context.at(i) == 0.0);
    CHECK(store.params.empty());
  }
  {
    // with a zero heading the two map modes agree exactly
    ParameterStore sa, sb;
    sa.seed = sb.seed = 21;
    ModelContext ma(sa, nullptr), mb(sb, nullptr);
    RunConfig t_only = cfg;
    t_only.map_mode = MapMode::TranslateOnly;
    MapContext ca = encode_map(ma, s, pose, cfg);
    MapContext cb = encode_map(mb, s, pose, t_only);
    CHECK(max_abs_diff(ca.context.vals(), cb.context.vals()) == 0.0);
  }
}

TEST_CASE("map context is invariant to the handled motions") {
  RunConfig cfg = small_cfg();
  Scene s = small_scene(cfg);
  Pose pose{Vec2(6.0, 6.3), 0.35, false};

  RigidTransform g{0.9, Vec2(12.0, -5.0)};
  Scene moved = transform_scene(s, g);
  Pose moved_pose{g.apply(pose.position), normalize_angle(pose.heading + g.theta), false};

  {
    ParameterStore sa, sb;
    sa.seed = sb.seed = 33;
    ModelContext ma(sa, nullptr), mb(sb, nullptr);
    MapContext ca = encode_map(ma, s, pose, cfg);
    MapContext cb = encode_map(mb, moved, moved_pose, cfg);
    CHECK(max_abs_diff(ca.context.vals(), cb.context.vals()) < 1e-10);
  }
  {
    // translate_only shrugs off translations but not rotations
    RunConfig t_only = cfg;
    t_only.map_mode = MapMode::TranslateOnly;
    RigidTransform shift{0.0, Vec2(40.0, 17.0)};
    Scene shifted = transform_scene(s, shift);
    Pose shifted_pose{shift.apply(pose.position), pose.heading, false};
    ParameterStore sa, sb, sc;
    sa.seed = sb.seed = sc.seed = 34;
    ModelContext ma(sa, nullptr), mb(sb, nullptr), mc3(sc, nullptr);
    MapContext ca = encode_map(ma, s, pose, t_only);
    MapContext cb = encode_map(mb, shifted, shifted_pose, t_only);
    CHECK(max_abs_diff(ca.context.vals(), cb.context.vals()) < 1e-10);

    RigidTransform spin{1.0, Vec2(0.0, 0.0)};
    Scene spun = transform_scene(s, spin);
    Pose spun_pose{spin.apply(pose.position), normalize_angle(pose.heading + spin.theta), false};
    MapContext cc = encode_map(mc3, spun, spun_pose, t_only);
    CHECK(max_abs_diff(ca.context.vals(), cc.context.vals()) > 1e-6);
  }
}

TEST_CASE("fuse_features builds the two streams") {
  RunConfig cfg = small_cfg();
  Scene s = small_scene(cfg);
  s.agent_valid[1] = false;  // pad the neighbor
  Vec2 e(6.0, 6.3);

  ParameterStore store;
  store.seed = 2;
  ModelContext mc(store, nullptr);
  MapContext ctx{constant({cfg.d_ctx()}, {0.25, -0.5, 1.0, 2.0})};

  FeatureBundle fb = fuse_features(mc, s, e, ctx, cfg);
  REQUIRE(fb.geo.shape == Shape{2, 4, 2});
  REQUIRE(fb.inv.shape == Shape{2, 3 + cfg.d_ctx()});
  CHECK(fb.mask == std::vector<char>{1, 0});
  CHECK(fb.ego == 0);

  for (int t = 0; t < cfg.t_in; ++t) {
    CHECK(fb.geo.at(size_t(t * 2)) == s.agents[0][size_t(t)].x - e.x);
    CHECK(fb.geo.at(size_t(t * 2 + 1)) == s.agents[0][size_t(t)].y - e.y);
  }
  // padded agent contributes nothing anywhere
  for (size_t i = size_t(cfg.t_in * 2); i < fb.geo.size(); ++i) CHECK(fb.geo.at(i) == 0.0);
  for (int c = 0; c < 3 + cfg.d_ctx(); ++c)
    CHECK(fb.inv.at(size_t((3 + cfg.d_ctx()) + c)) == 0.0);

  for (int t = 0; t < cfg.t_in - 1; ++t) {
    double dx = fb.geo.at(size_t((t + 1) * 2)) - fb.geo.at(size_t(t * 2));
    double dy = fb.geo.at(size_t((t + 1) * 2 + 1)) - fb.geo.at(size_t(t * 2 + 1));
    double want = std::sqrt(dx * dx + dy * dy + 1e-12);
    CHECK(fb.inv.at(size_t(t)) == doctest::Approx(want).epsilon(1e-14));
  }
  for (int c = 0; c < cfg.d_ctx(); ++c) CHECK(fb.inv.at(size_t(3 + c)) == ctx.context.at(size_t(c)));
}

TEST_CASE("encoder gradients agree with finite differences") {
  RunConfig cfg = small_cfg();
  Scene s = small_scene(cfg);
  Pose pose{Vec2(6.0, 6.3), 0.35, false};

  auto check_kind = [&](EncoderKind kind, uint64_t seed) {
    RunConfig k = cfg;
    k.encoder_kind = kind;
    ParameterStore store;
    store.seed = seed;
    auto loss = [&](ParameterStore& st, bool record) {
      if (record) {
        st.zero_grads();
        Tape tape;
        ModelContext mc(st, &tape);
        Tensor l = sum_all(encode_map(mc, s, pose, k).context);
        tape.backward(l);
        mc.harvest();
        return l.scalar();
      }
      ModelContext mc(st, nullptr);
      return sum_all(encode_map(mc, s, pose, k).context).scalar();
    };
    CHECK(oracle::grad_check_store(store, loss) < 1e-4);
  };
  check_kind(EncoderKind::Transformer, 101);
  check_kind(EncoderKind::SingleAttention, 102);
}
