#pragma once

#include <string>
#include <vector>

#include "eqmap/scene.hpp"

namespace eqmap {

// trajectory overlay in world coordinates: lane, history, ground-truth (when
// the scene has one) and prediction layers plus a legend
std::string scene_svg(const Scene& scene, const std::vector<Vec2>& predicted);

// per-epoch training-loss curve on a fixed canvas
std::string loss_curve_svg(const std::vector<double>& train_loss);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace eqmap
