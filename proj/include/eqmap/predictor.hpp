#pragma once

#include <map>
#include <string>
#include <vector>

#include "eqmap/backbone.hpp"

namespace eqmap {

struct PredictionReport {
  std::string scene_id;
  std::vector<Vec2> predicted;   // T_out points, world frame
  std::map<int, double> ade;     // horizon seconds -> meters; empty without truth
  std::map<int, double> fde;
  std::string warning;           // degenerate-heading note, or empty
};

// equivariant readout: ego channels de-meaned, mlp_layers of channel mixing
// with norm gates, re-meaned, shifted to the ego position; returns [T_out, 2]
Tensor decode(ModelContext& mc, const Tensor& G, int ego, const Vec2& ego_position,
              const RunConfig& cfg);

// mean smoothed point distance; pred and truth must be [T, 2]
Tensor ade_loss(const Tensor& pred, const Tensor& truth);

// ADE/FDE at 1, 2, 3 second horizons
void compute_metrics(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth, int rate_hz,
                     std::map<int, double>& ade, std::map<int, double>& fde);

std::vector<Vec2> constant_velocity_baseline(const std::vector<Vec2>& history, int t_out);

struct ForwardOut {
  PredictionReport report;
  Tensor pred;  // [T_out, 2], on mc's tape when one is bound
};

// geometry -> map encoder -> backbone -> decode, with metrics when the scene
// carries ground truth
ForwardOut forward_model(ModelContext& mc, const Scene& scene, const RunConfig& cfg);

// ego pose at the last history step; identity-rotation fallback (and warning
// flag) when the heading is degenerate
Pose ego_pose(const Scene& scene, const RunConfig& cfg);

// scene id, 2*T_out coordinates, then ade/fde values, 9 significant digits
std::string report_line(const PredictionReport& r);

Tensor trajectory_tensor(const std::vector<Vec2>& pts);

}  // namespace eqmap
