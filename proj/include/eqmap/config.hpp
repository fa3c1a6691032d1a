#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eqmap/errors.hpp"

namespace eqmap {

enum class MapMode { None, TranslateOnly, TranslateRotate };
enum class EncoderKind { Transformer, SingleAttention, None };

std::string to_string(MapMode m);
std::string to_string(EncoderKind k);
MapMode map_mode_from(const std::string& s);
EncoderKind encoder_kind_from(const std::string& s);

// Every knob of the pipeline. Defaults are the full-scale configuration;
// preset "desk" rescales to something trainable in minutes on a laptop core.
struct RunConfig {
  // scene and model extents
  int t_in = 20;
  int t_out = 30;
  int n_agents = 4;
  int q_lanes = 10;
  int l_points = 100;
  int p_repeats = 20;
  int hidden_dim = 64;
  int mlp_layers = 4;
  int heads = 12;
  int k_categories = 4;
  int rate_hz = 10;

  // optimizer
  double lr = 1e-5;
  int epochs = 20;
  int batch = 512;

  // variants
  MapMode map_mode = MapMode::TranslateRotate;
  EncoderKind encoder_kind = EncoderKind::Transformer;

  uint64_t seed = 1;

  // synthetic data
  int count_train = 2000;
  int count_val = 250;
  int count_test = 250;
  double curvature_min = 0.003;
  double curvature_max = 0.03;
  double speed_min = 5.0;
  double speed_max = 15.0;
  double noise_sigma = 0.2;
  double lane_length_m = 120.0;

  // derived
  int d_model() const { return hidden_dim; }
  int d_ctx() const { return hidden_dim / 2; }
  int c_channels() const { return hidden_dim / 4 > 0 ? hidden_dim / 4 : 1; }
  int d_k() const { return hidden_dim / heads; }
  int d_ff() const { return 4 * hidden_dim; }
  int tokens() const { return q_lanes * l_points; }
};

void apply_preset(RunConfig& cfg, const std::string& name);

// one key=value assignment; unknown key or unparsable value is a ConfigError
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

// flat key=value text (one per line, '#' comments); `preset=` lines apply
// immediately so later keys can override them
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

void validate(const RunConfig& cfg);

// complete state as sorted key=value lines; stable across runs
std::string canonical_text(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// structural fields that must agree between a checkpoint and a requested
// evaluation; returns the names that differ
std::vector<std::string> structural_mismatch(const RunConfig& a, const RunConfig& b);

// the scene-shape subset, for matching a run against a dataset's manifest
std::vector<std::string> data_mismatch(const RunConfig& a, const RunConfig& b);

}  // namespace eqmap
