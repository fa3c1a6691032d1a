#pragma once

#include <string>
#include <vector>

#include "eqmap/predictor.hpp"

namespace eqmap {

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  std::map<int, double> val_ade;  // horizon seconds -> meters
  std::map<int, double> val_fde;
  double seconds = 0;  // wall clock; sidecar only, never in the TrainLog
};

struct SplitMetrics {
  std::map<int, double> ade, fde;
  int scenes = 0;
};

// mean model metrics over a split; every scene must carry ground truth
SplitMetrics eval_model(ParameterStore& store, const std::vector<Scene>& scenes,
                        const RunConfig& cfg);
// the same averages for the constant-velocity extrapolation of the ego history
SplitMetrics eval_baseline(const std::vector<Scene>& scenes, const RunConfig& cfg);

// TrainLog rows rendered as CSV (deterministic columns only)
std::string train_log_csv(const std::vector<EpochRow>& rows, const std::string& cfg_hash);
// wall-clock sidecar
std::string timing_csv(const std::vector<EpochRow>& rows);

struct TrainResult {
  std::vector<EpochRow> rows;
};

// full optimization run; writes per-epoch checkpoints, ckpt_final.bin,
// train_log.csv, train_timing.csv and loss_curve.svg under out_dir
TrainResult train_model(ParameterStore& store, const Dataset& data, const RunConfig& cfg,
                        const std::string& out_dir);

}  // namespace eqmap
