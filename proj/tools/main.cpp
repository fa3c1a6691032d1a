#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eqmap/predictor.hpp"
#include "eqmap/rng.hpp"
#include "eqmap/svg.hpp"
#include "eqmap/synth.hpp"
#include "eqmap/train.hpp"

namespace fs = std::filesystem;
using namespace eqmap;

namespace {

constexpr double kAuditThreshold = 1e-8;

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets,
                     const std::optional<uint64_t>& seed) {
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
}

RunConfig config_from_file(const std::string& path, const std::vector<std::string>& sets,
                           const std::optional<uint64_t>& seed) {
  RunConfig cfg = load_config_file(path);
  apply_overrides(cfg, sets, seed);
  validate(cfg);
  return cfg;
}

void check_dataset_match(const RunConfig& cfg, const Dataset& data) {
  const std::vector<std::string> bad = data_mismatch(cfg, data.gen_config);
  if (!bad.empty()) {
    std::string msg = "config does not match the dataset manifest; differing fields:";
    for (const std::string& f : bad) msg += " " + f;
    throw ConfigError(msg);
  }
}

const std::vector<Scene>& pick_split(const Dataset& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

int cmd_gen(const std::string& config_path, const std::string& out,
            const std::vector<std::string>& sets, const std::optional<uint64_t>& seed) {
  RunConfig cfg = config_from_file(config_path, sets, seed);
  SplitResult splits = synth_generate(cfg);
  write_dataset(out, splits, cfg);
  std::printf("wrote %zu train, %zu val, %zu test scenes to %s\n", splits.train.size(),
              splits.val.size(), splits.test.size(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out, const std::vector<std::string>& sets,
              const std::optional<uint64_t>& seed) {
  RunConfig cfg = config_from_file(config_path, sets, seed);
  Dataset data = load_dataset(dataset_dir);
  check_dataset_match(cfg, data);
  fs::create_directories(out);
  ParameterStore store;
  store.seed = cfg.seed;
  train_model(store, data, cfg, out);
  std::printf("final checkpoint: %s/ckpt_final.bin (%zu parameters)\n", out.c_str(),
              store.param_count());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir,
             const std::string& split, const std::string& out,
             const std::vector<std::string>& sets, const std::optional<uint64_t>& seed) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  RunConfig cfg = parse_config_text(lc.config_text);
  apply_overrides(cfg, sets, seed);
  validate(cfg);
  Dataset data = load_dataset(dataset_dir);
  check_dataset_match(cfg, data);

  std::vector<std::string> splits;
  if (split == "all")
    splits = {"train", "val", "test"};
  else
    splits = {split};

  fs::create_directories(out);
  const auto t0 = std::chrono::steady_clock::now();
  std::string csv = "row,split,ade_1s,ade_2s,ade_3s,fde_1s,fde_2s,fde_3s,param_count\n";
  std::fputs(csv.c_str(), stdout);
  for (const std::string& sp : splits) {
    const std::vector<Scene>& scenes = pick_split(data, sp);
    SplitMetrics model = eval_model(lc.store, scenes, cfg);
    SplitMetrics base = eval_baseline(scenes, cfg);
    auto row = [&](const char* name, const SplitMetrics& m, size_t params) {
      std::string line = std::string(name) + "," + sp;
      for (int h : {1, 2, 3}) line += "," + fmt9(m.ade.at(h));
      for (int h : {1, 2, 3}) line += "," + fmt9(m.fde.at(h));
      line += "," + std::to_string(params) + "\n";
      csv += line;
      std::fputs(line.c_str(), stdout);
    };
    row("model", model, lc.store.param_count());
    row("constant_velocity", base, 0);
  }
  write_text_file(out + "/eval_metrics.csv", csv);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "seconds\n%.3f\n", secs);
  write_text_file(out + "/eval_timing.csv", buf);
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& scene_path,
                const std::string& out, const std::vector<std::string>& sets,
                const std::optional<uint64_t>& seed) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  RunConfig cfg = parse_config_text(lc.config_text);
  apply_overrides(cfg, sets, seed);
  validate(cfg);
  Scene scene = load_scene(scene_path, dims_from(cfg));
  ModelContext mc(lc.store, nullptr);
  ForwardOut fo = forward_model(mc, scene, cfg);

  std::string record = report_line(fo.report) + "\n";
  if (!fo.report.warning.empty()) record += "warning " + fo.report.warning + "\n";
  fs::create_directories(out);
  write_text_file(out + "/prediction.txt", record);
  write_text_file(out + "/prediction.svg", scene_svg(scene, fo.report.predicted));
  std::fputs(record.c_str(), stdout);
  return 0;
}

int cmd_check_equivariance(const std::string& ckpt_path, const std::string& config_path,
                           const std::string& dataset_dir, const std::string& split, int trials,
                           const std::string& out, const std::vector<std::string>& sets,
                           const std::optional<uint64_t>& seed) {
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  RunConfig cfg;
  ParameterStore store;
  if (!ckpt_path.empty()) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    cfg = parse_config_text(lc.config_text);
    store = std::move(lc.store);
  } else if (!config_path.empty()) {
    cfg = load_config_file(config_path);
    store.seed = cfg.seed;
  } else {
    throw ConfigError("check-equivariance needs --checkpoint or --random-params with --config");
  }
  apply_overrides(cfg, sets, seed);
  validate(cfg);
  if (store.params.empty()) store.seed = cfg.seed;
  Dataset data = load_dataset(dataset_dir);
  check_dataset_match(cfg, data);
  const std::vector<Scene>& scenes = pick_split(data, split);
  if (scenes.empty()) throw DataError("split '" + split + "' has no scenes to audit");

  double max_dev = 0.0;
  std::string report;
  int audited = 0;
  for (const Scene& scene : scenes) {
    if (ego_pose(scene, cfg).degenerate) {
      report += "excluded " + scene.id + " degenerate-heading\n";
      continue;
    }
    ModelContext mc(store, nullptr);
    ForwardOut base = forward_model(mc, scene, cfg);
    double scene_dev = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng = Rng(cfg.seed).fork("audit/" + scene.id + "/t" + std::to_string(trial));
      RigidTransform g;
      g.theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      const double dir = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      const double mag = rng.uniform(0.0, 1000.0);
      g.t = Vec2(mag * std::cos(dir), mag * std::sin(dir));
      Scene moved = transform_scene(scene, g);
      ModelContext mc2(store, nullptr);
      ForwardOut shifted = forward_model(mc2, moved, cfg);
      for (int t = 0; t < cfg.t_out; ++t) {
        const Vec2 expect = g.apply(base.report.predicted[size_t(t)]);
        const Vec2 got = shifted.report.predicted[size_t(t)];
        scene_dev = std::max(scene_dev, (got - expect).norm());
      }
    }
    report += "scene " + scene.id + " max_dev " + fmt9(scene_dev) + "\n";
    max_dev = std::max(max_dev, scene_dev);
    ++audited;
  }
  const bool pass = audited > 0 && max_dev < kAuditThreshold;
  report += "scenes " + std::to_string(audited) + " trials " + std::to_string(trials) + "\n";
  report += "max_deviation " + fmt9(max_dev) + "\n";
  report += "threshold " + fmt9(kAuditThreshold) + "\n";
  report += std::string("result ") + (pass ? "PASS" : "FAIL") + "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file(out + "/equivariance_audit.txt", report);
  }
  std::fputs(report.c_str(), stdout);
  return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SE(2)-equivariant motion prediction harness"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, out_dir, ckpt_path, scene_path;
  std::string split;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  bool random_params = false;
  int trials = 5;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--set", sets, "override a config key, key=value")->type_name("KEY=VALUE");
    c->add_option("--seed", seed, "override the config seed");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config file")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
  eval->add_option("--split", split, "train, val, test or all (default val)");
  eval->add_option("--out", out_dir, "output directory")->required();
  add_common(eval);

  CLI::App* predict = app.add_subcommand("predict", "predict one scene");
  predict->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  predict->add_option("--scene", scene_path, "scene CSV file")->required();
  predict->add_option("--out", out_dir, "output directory")->required();
  add_common(predict);

  CLI::App* audit = app.add_subcommand("check-equivariance", "audit rigid-motion equivariance");
  audit->add_option("--checkpoint", ckpt_path, "checkpoint file");
  audit->add_flag("--random-params", random_params, "use freshly initialized parameters");
  audit->add_option("--config", config_path, "config file (with --random-params)");
  audit->add_option("--dataset", dataset_dir, "dataset directory")->required();
  audit->add_option("--split", split, "train, val or test (default test)");
  audit->add_option("--trials", trials, "rigid transforms per scene");
  audit->add_option("--out", out_dir, "output directory for the audit report");
  add_common(audit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(config_path, out_dir, sets, seed);
    if (train->parsed()) return cmd_train(config_path, dataset_dir, out_dir, sets, seed);
    if (eval->parsed())
      return cmd_eval(ckpt_path, dataset_dir, split.empty() ? "val" : split, out_dir, sets, seed);
    if (predict->parsed()) return cmd_predict(ckpt_path, scene_path, out_dir, sets, seed);
    if (audit->parsed()) {
      if (random_params) ckpt_path.clear();
      return cmd_check_equivariance(ckpt_path, config_path, dataset_dir,
                                    split.empty() ? "test" : split, trials, out_dir, sets, seed);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
