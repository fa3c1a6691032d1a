#include "eqmap/backbone.hpp"

namespace eqmap {

namespace {

Tensor mask_tensor(const std::vector<char>& mask) {
  std::vector<double> m(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) m[i] = mask[i] ? 1.0 : 0.0;
  return constant({static_cast<int>(mask.size())}, std::move(m));
}

struct Pairs {
  std::vector<int> src, dst;
  std::vector<char> valid;
};

Pairs ordered_pairs(const std::vector<char>& mask) {
  Pairs p;
  int n = static_cast<int>(mask.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      p.dst.push_back(i);
      p.src.push_back(j);
      p.valid.push_back(mask[static_cast<size_t>(i)] && mask[static_cast<size_t>(j)] ? 1 : 0);
    }
  return p;
}

// 2*sigmoid gate: smooth, positive, and exactly 1 at zero pre-activation
Tensor norm_gate(ModelContext& mc, const Tensor& norms_flat, const Tensor& extra, int extra_dim,
                 int hidden, const std::string& prefix) {
  Tensor in = extra_dim > 0 ? concat_last({norms_flat, extra}) : norms_flat;
  Tensor g = mlp2(mc, in, 1 + extra_dim, hidden, 1, prefix);
  return scale(sigmoid(g), 2.0);
}

}  // namespace

Tensor mlp2(ModelContext& mc, const Tensor& x, int in, int hidden, int out,
            const std::string& prefix) {
  Tensor w1 = mc.param(prefix + "/w1", {in, hidden}, in);
  Tensor b1 = mc.param(prefix + "/b1", {hidden}, 0, Init::Zeros);
  Tensor w2 = mc.param(prefix + "/w2", {hidden, out}, hidden);
  Tensor b2 = mc.param(prefix + "/b2", {out}, 0, Init::Zeros);
  return add_rowvec(matmul(relu(add_rowvec(matmul(x, w1), b1)), w2), b2);
}

Tensor channel_norms(const Tensor& G) {
  return sqrt_eps(sum_last(mul(G, G)), 1e-12);
}

Features init_features(ModelContext& mc, const FeatureBundle& bundle, const RunConfig& cfg) {
  const int C = cfg.c_channels(), h = cfg.hidden_dim;
  if (bundle.geo.shape != Shape{cfg.n_agents, cfg.t_in, 2})
    throw DataError("init_features: geometric stream is " + shape_str(bundle.geo.shape) +
                    ", expected " + shape_str({cfg.n_agents, cfg.t_in, 2}));
  const int w = cfg.t_in - 1 + cfg.d_ctx();
  if (bundle.inv.shape != Shape{cfg.n_agents, w})
    throw DataError("init_features: invariant stream is " + shape_str(bundle.inv.shape) +
                    ", expected " + shape_str({cfg.n_agents, w}));
  Tensor mask = mask_tensor(bundle.mask);
  Tensor gw = mc.param("bb/init/gw", {C, cfg.t_in}, cfg.t_in);
  Tensor G = row_scale(matmul(gw, bundle.geo), mask);  // [N, C, 2]
  Tensor H = row_scale(mlp2(mc, bundle.inv, w, h, h, "bb/init/h"), mask);
  return Features{G, H};
}

EdgeList infer_edges(ModelContext& mc, const Tensor& G, const Tensor& H,
                     const std::vector<char>& mask, const RunConfig& cfg) {
  Pairs p = ordered_pairs(mask);
  EdgeList out;
  out.src = p.src;
  out.dst = p.dst;
  out.pair_valid = p.valid;
  if (p.src.empty()) return out;
  const int C = cfg.c_channels(), h = cfg.hidden_dim, K = cfg.k_categories;
  Tensor diff = sub(gather_axis0(G, p.dst), gather_axis0(G, p.src));  // [P, C, 2]
  Tensor cd = channel_norms(diff);                                    // [P, C]
  Tensor desc = concat_last({cd, gather_axis0(H, p.dst), gather_axis0(H, p.src)});
  Tensor logits = mlp2(mc, desc, C + 2 * h, h, K, "bb/edges");
  out.e = row_scale(softmax(logits, -1), mask_tensor(p.valid));
  return out;
}

Tensor edges_dense(const EdgeList& edges, int n, int k) {
  if (edges.empty()) return full({n, n, k}, 0.0);
  std::vector<int> flat(edges.src.size());
  for (size_t p = 0; p < flat.size(); ++p) flat[p] = edges.dst[p] * n + edges.src[p];
  return reshape(scatter_axis0(edges.e, flat, n * n), {n, n, k});
}

Tensor geometric_layer(ModelContext& mc, const Tensor& G, const Tensor& H, const EdgeList& edges,
                       const std::vector<char>& mask, int layer, const RunConfig& cfg) {
  const int C = cfg.c_channels(), h = cfg.hidden_dim, K = cfg.k_categories;
  const int N = cfg.n_agents;
  const std::string prefix = "bb/l" + std::to_string(layer) + "/geo";
  Tensor wself = mc.param(prefix + "/wself", {C, C}, C);
  Tensor pre = matmul(wself, G);  // [N, C, 2]

  if (!edges.empty()) {
    Tensor diff = sub(gather_axis0(G, edges.dst), gather_axis0(G, edges.src));  // [P, C, 2]
    Tensor phi_in = concat_last({gather_axis0(H, edges.dst), gather_axis0(H, edges.src)});
    Tensor phi = mlp2(mc, phi_in, 2 * h, h, K, prefix + "/phi");  // [P, K]
    Tensor msg;
    for (int k = 0; k < K; ++k) {
      Tensor wk = mc.param(prefix + "/wk" + std::to_string(k), {C, C}, C);
      Tensor mixed = matmul(wk, diff);                                   // [P, C, 2]
      Tensor coef = mul(select_last(edges.e, k), select_last(phi, k));   // [P]
      Tensor term = row_scale(mixed, coef);
      msg = k == 0 ? term : add(msg, term);
    }
    pre = add(pre, scatter_axis0(msg, edges.dst, N));
  }

  Tensor norms = channel_norms(pre);  // [N, C]
  std::vector<int> rep(static_cast<size_t>(N) * static_cast<size_t>(C));
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < C; ++c) rep[static_cast<size_t>(i * C + c)] = i;
  Tensor gate = norm_gate(mc, reshape(norms, {N * C, 1}), gather_axis0(H, rep), h, h / 2,
                          prefix + "/gate");
  Tensor out = row_scale(pre, reshape(gate, {N, C}));
  return row_scale(out, mask_tensor(mask));
}

Tensor pattern_layer(ModelContext& mc, const Tensor& G, const Tensor& H,
                     const std::vector<char>& mask, int layer, const RunConfig& cfg) {
  const int C = cfg.c_channels(), h = cfg.hidden_dim;
  const int N = cfg.n_agents;
  const std::string prefix = "bb/l" + std::to_string(layer) + "/pat";
  Pairs p = ordered_pairs(mask);

  Tensor nbr_mean;
  if (!p.src.empty()) {
    Tensor diff = sub(gather_axis0(G, p.dst), gather_axis0(G, p.src));
    Tensor cd = channel_norms(diff);  // [P, C]
    Tensor nbr_in = concat_last({gather_axis0(H, p.src), cd});
    Tensor nbr = mlp2(mc, nbr_in, h + C, h, h, prefix + "/nbr");  // [P, h]
    nbr = row_scale(nbr, mask_tensor(p.valid));
    Tensor summed = scatter_axis0(nbr, p.dst, N);  // [N, h]
    std::vector<double> inv_count(static_cast<size_t>(N), 0.0);
    for (size_t q = 0; q < p.dst.size(); ++q)
      if (p.valid[q]) inv_count[static_cast<size_t>(p.dst[q])] += 1.0;
    for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
    nbr_mean = row_scale(summed, constant({N}, std::move(inv_count)));
  } else {
    nbr_mean = full({N, h}, 0.0);
  }

  Tensor upd_in = concat_last({H, channel_norms(G), nbr_mean});  // [N, h + C + h]
  Tensor upd = mlp2(mc, upd_in, h + C + h, h, h, prefix + "/out");
  upd = row_scale(upd, mask_tensor(mask));
  return row_scale(add(H, upd), mask_tensor(mask));
}

Features run_backbone(ModelContext& mc, const FeatureBundle& bundle, const RunConfig& cfg) {
  Features f = init_features(mc, bundle, cfg);
  EdgeList edges = infer_edges(mc, f.G, f.H, bundle.mask, cfg);
  for (int p = 0; p < cfg.p_repeats; ++p) {
    Tensor Gn = geometric_layer(mc, f.G, f.H, edges, bundle.mask, p, cfg);
    Tensor Hn = pattern_layer(mc, f.G, f.H, bundle.mask, p, cfg);
    f = Features{Gn, Hn};
  }
  return f;
}

}  // namespace eqmap
