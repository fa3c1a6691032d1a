#pragma once

#include <string>
#include <vector>

#include "eqmap/config.hpp"
#include "eqmap/geometry.hpp"

namespace eqmap {

// Fixed-extent scene per the data model: N agent slots of T_in points, Q lane
// slots of L points, zero-filled where invalid, exactly one ego.
struct Scene {
  std::string id;
  int ego = 0;
  std::vector<std::string> agent_ids;     // empty string on padded slots
  std::vector<std::vector<Vec2>> agents;  // N x T_in
  std::vector<bool> agent_valid;
  std::vector<LanePolyline> lanes;  // Q, each exactly L points
  std::vector<bool> lane_valid;
  std::vector<Vec2> ego_future;  // T_out points, or empty at inference
};

struct SceneDims {
  int t_in = 20;
  int t_out = 30;
  int n_agents = 4;
  int q_lanes = 10;
  int l_points = 100;
};
SceneDims dims_from(const RunConfig& cfg);

struct RawAgent {
  std::string id;
  bool is_ego = false;
  std::vector<Vec2> history;
  std::vector<Vec2> future;  // ego only
};

struct RawScene {
  std::string id;
  std::vector<RawAgent> agents;
  std::vector<LanePolyline> lanes;
};

// round x to 9 significant decimal digits (the serialization grid)
double quantize9(double x);
std::string fmt9(double x);

// zero-pad to fixed extents; beyond-capacity agents/lanes are dropped keeping
// the ones nearest the ego (file order preserved among the kept)
Scene pad_scene(const RawScene& raw, const SceneDims& d);

Scene load_scene(const std::string& path, const SceneDims& d);
void save_scene(const Scene& s, const std::string& path);

// rigid motion of every valid entity (agents, lanes, ego future); padded
// slots stay zero
Scene transform_scene(const Scene& s, const RigidTransform& g);

struct SplitResult {
  std::vector<Scene> train, val, test;
};
// deterministic shuffled partition; ratios must sum to 1
SplitResult split(const std::vector<Scene>& scenes, double r_train, double r_val, double r_test,
                  uint64_t seed);

// a dataset directory holds one CSV per scene plus manifest.json naming the
// split membership and the generating config
struct Dataset {
  std::vector<Scene> train, val, test;
  RunConfig gen_config;
};
void write_dataset(const std::string& dir, const SplitResult& splits, const RunConfig& cfg);
Dataset load_dataset(const std::string& dir);

}  // namespace eqmap
