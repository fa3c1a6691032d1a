#pragma once

#include <vector>

#include "eqmap/map_encoder.hpp"

namespace eqmap {

// coordinate-valued channels G [N, C, 2] and invariant channels H [N, hidden]
struct Features {
  Tensor G;
  Tensor H;
};

// soft interaction categories over ordered agent pairs (i != j), kept in
// pair-list form; e rows of invalid pairs are exactly zero
struct EdgeList {
  std::vector<int> src, dst;      // dst receives from src
  std::vector<char> pair_valid;   // both endpoints valid
  Tensor e;                       // [P, K]; unset when no pairs exist
  bool empty() const { return src.empty(); }
};

Features init_features(ModelContext& mc, const FeatureBundle& bundle, const RunConfig& cfg);

EdgeList infer_edges(ModelContext& mc, const Tensor& G, const Tensor& H,
                     const std::vector<char>& mask, const RunConfig& cfg);

// dense [N, N, K] view of the pair list (zeros elsewhere) for the public
// contract and its tests
Tensor edges_dense(const EdgeList& edges, int n, int k);

Tensor geometric_layer(ModelContext& mc, const Tensor& G, const Tensor& H, const EdgeList& edges,
                       const std::vector<char>& mask, int layer, const RunConfig& cfg);

Tensor pattern_layer(ModelContext& mc, const Tensor& G, const Tensor& H,
                     const std::vector<char>& mask, int layer, const RunConfig& cfg);

// init, edges once, then P interleaved geometric/pattern updates with
// per-iteration parameters
Features run_backbone(ModelContext& mc, const FeatureBundle& bundle, const RunConfig& cfg);

// per-channel norms [N, C] of G [N, C, 2], smoothed at zero
Tensor channel_norms(const Tensor& G);

// two-layer ReLU MLP with parameters under `prefix`
Tensor mlp2(ModelContext& mc, const Tensor& x, int in, int hidden, int out,
            const std::string& prefix);

}  // namespace eqmap
