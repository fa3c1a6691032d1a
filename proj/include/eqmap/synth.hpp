#pragma once

#include <vector>

#include "eqmap/scene.hpp"

namespace eqmap {

// Deterministic lane-following scene generator. Lanes are constant-curvature
// arcs (straights when curvature_min = 0 is drawn); every agent tracks a lane
// at a sampled speed with Gaussian perpendicular noise, and the ego future
// continues its lane. Fully determined by cfg.seed and the scene index.
Scene synth_scene(const RunConfig& cfg, int index);

// count_train + count_val + count_test scenes, ids scene_000000 onward,
// already assigned to splits in index order
SplitResult synth_generate(const RunConfig& cfg);

}  // namespace eqmap
