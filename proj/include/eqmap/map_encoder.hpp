#pragma once

#include <vector>

#include "eqmap/config.hpp"
#include "eqmap/params.hpp"
#include "eqmap/scene.hpp"

namespace eqmap {

// Q*L map tokens plus their validity; padded tokens are exactly zero
struct TokenSequence {
  Tensor tokens;           // [Q*L, d_model]
  std::vector<char> mask;  // 1 = valid
};

struct MapContext {
  Tensor context;  // [d_ctx], all-zero when no map participates
};

// per-agent fused inputs for the backbone
struct FeatureBundle {
  Tensor geo;              // [N, T_in, 2] ego-centered coordinates
  Tensor inv;              // [N, (T_in-1) + d_ctx] speeds then map context
  std::vector<char> mask;  // agent validity
  int ego = 0;
};

// lane-major flattening of the ego-frame map, each point embedded by a
// learned linear map; invalid lane slots yield zero, masked tokens
TokenSequence vectorize_map(ModelContext& mc, const std::vector<LanePolyline>& ego_lanes,
                            const std::vector<bool>& lane_valid, const RunConfig& cfg);

// multi-head self-attention with masked keys, head concat + mix, residual
// add, layer norm; masked tokens come out exactly zero
TokenSequence attention_block(ModelContext& mc, const TokenSequence& seq, const RunConfig& cfg);

// position-wise two-layer FFN, residual add, layer norm; masked tokens stay zero
TokenSequence ffn_block(ModelContext& mc, const TokenSequence& seq, const RunConfig& cfg);

// one single-head attention pass with a residual add only
TokenSequence single_attention_encoder(ModelContext& mc, const TokenSequence& seq,
                                       const RunConfig& cfg);

// masked mean over valid tokens, then a learned linear map to d_ctx
MapContext pool_context(ModelContext& mc, const TokenSequence& seq, const RunConfig& cfg);

// attention core shared by the block variants: projections, masked softmax,
// head concat and output mix. Returns the pre-residual attention output.
Tensor mha(ModelContext& mc, const Tensor& x, const std::vector<char>& mask, int n_heads, int d_k,
           const std::string& prefix);

// full encoder path for one scene's map, honoring map mode and encoder kind;
// ego_pose positions the ego frame
MapContext encode_map(ModelContext& mc, const Scene& scene, const Pose& ego_pose,
                      const RunConfig& cfg);

// geometric stream = ego-centered histories; invariant stream = per-agent
// [T_in-1 displacement norms, map context]; masked agents all-zero
FeatureBundle fuse_features(ModelContext& mc, const Scene& scene, const Vec2& ego_position,
                            const MapContext& ctx, const RunConfig& cfg);

}  // namespace eqmap
