// End-to-end checks that drive the CLI binary the way a user would.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "eqmap/scene.hpp"

using namespace eqmap;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out, err;
};

fs::path work() {
  static fs::path root = [] {
    fs::path p(WORK_ROOT);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "";
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path of = work() / ("out_" + std::to_string(counter));
  fs::path ef = work() / ("err_" + std::to_string(counter));
  ++counter;
  std::string cmd =
      std::string(CLI_BIN) + " " + args + " > " + of.string() + " 2> " + ef.string();
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(of);
  r.err = slurp(ef);
  return r;
}

size_t count_of(const std::string& hay, const std::string& needle) {
  size_t n = 0;
  for (size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1))
    ++n;
  return n;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  f.push_back(cur);
  return f;
}

// shared artifacts: one tiny dataset and one trained model reused across the
// cases below (training twice already proves determinism)
struct Pipeline {
  fs::path cfg_file, ds, ds2, run1, run2, straight_ds;
  std::string gen_out, train_out;
  size_t param_count = 0;
};

const Pipeline& pipe() {
  static Pipeline p = [] {
    Pipeline q;
    q.cfg_file = work() / "tiny.cfg";
    std::ofstream os(q.cfg_file);
    os << "preset=desk\nseed=7\ncount_train=24\ncount_val=6\ncount_test=6\n"
       << "epochs=3\nbatch=8\n";
    os.close();
    q.ds = work() / "ds";
    q.ds2 = work() / "ds2";
    q.run1 = work() / "run1";
    q.run2 = work() / "run2";
    q.straight_ds = work() / "straight_ds";

    RunResult gen = run("gen --config " + q.cfg_file.string() + " --out " + q.ds.string());
    REQUIRE(gen.code == 0);
    q.gen_out = gen.out;
    REQUIRE(run("gen --config " + q.cfg_file.string() + " --out " + q.ds2.string()).code == 0);
    REQUIRE(run("gen --config " + q.cfg_file.string() +
                " --set curvature_min=0 --set curvature_max=0 --set noise_sigma=0 --out " +
                q.straight_ds.string())
                .code == 0);

    RunResult tr = run("train --config " + q.cfg_file.string() + " --dataset " + q.ds.string() +
                       " --out " + q.run1.string());
    REQUIRE(tr.code == 0);
    q.train_out = tr.out;
    REQUIRE(run("train --config " + q.cfg_file.string() + " --dataset " + q.ds.string() +
                " --out " + q.run2.string())
                .code == 0);

    size_t lp = tr.out.rfind('(');
    REQUIRE(lp != std::string::npos);
    q.param_count = std::strtoull(tr.out.c_str() + lp + 1, nullptr, 10);
    return q;
  }();
  return p;
}

}  // namespace

TEST_CASE("gen writes a deterministic dataset") {
  const Pipeline& p = pipe();
  CHECK(p.gen_out == "wrote 24 train, 6 val, 6 test scenes to " + p.ds.string() + "\n");
  CHECK(fs::exists(p.ds / "manifest.json"));

  // same config, fresh run, identical bytes
  CHECK(slurp(p.ds / "manifest.json") == slurp(p.ds2 / "manifest.json"));
  CHECK(slurp(p.ds / "scene_000000.csv") == slurp(p.ds2 / "scene_000000.csv"));
  CHECK(!slurp(p.ds / "scene_000000.csv").empty());

  Dataset back = load_dataset(p.ds.string());
  CHECK(back.train.size() == 24);
  CHECK(back.val.size() == 6);
  CHECK(back.test.size() == 6);

  RunResult bad = run("gen --config " + (work() / "nope.cfg").string() + " --out " +
                      (work() / "x").string());
  CHECK(bad.code == 1);
  CHECK(bad.err.find("config error: cannot open config file:") == 0);

  RunResult bad_key = run("gen --config " + pipe().cfg_file.string() +
                          " --set bogus=1 --out " + (work() / "x").string());
  CHECK(bad_key.code == 1);
  CHECK(bad_key.err == "config error: unknown config key 'bogus'\n");
}

TEST_CASE("train logs deterministically and saves checkpoints") {
  const Pipeline& p = pipe();
  auto stdout_rows = lines_of(p.train_out);
  REQUIRE(stdout_rows.size() == 4);  // one line per epoch, then the summary
  CHECK(stdout_rows[0].find("epoch 1/3 train_loss ") == 0);
  CHECK(stdout_rows.back().find("final checkpoint: " + p.run1.string() + "/ckpt_final.bin (") ==
        0);
  CHECK(p.param_count > 1000);

  for (const char* f : {"ckpt_final.bin", "ckpt_epoch_1.bin", "ckpt_epoch_2.bin",
                        "ckpt_epoch_3.bin", "train_log.csv", "train_timing.csv",
                        "loss_curve.svg"})
    CHECK(fs::exists(p.run1 / f));

  std::string log = slurp(p.run1 / "train_log.csv");
  auto rows = lines_of(log);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] ==
        "epoch,train_loss,val_ade_1s,val_ade_2s,val_ade_3s,val_fde_1s,val_fde_2s,val_fde_3s,"
        "config_hash");
  auto r1 = split_csv(rows[1]);
  REQUIRE(r1.size() == 9);
  CHECK(r1[0] == "1");
  CHECK(std::stod(r1[1]) > 0.0);
  // one hash for the whole run
  CHECK(split_csv(rows[2])[8] == r1[8]);
  CHECK(split_csv(rows[3])[8] == r1[8]);

  // dropping the wall-clock column makes the log reproducible byte for byte
  CHECK(log == slurp(p.run2 / "train_log.csv"));
  CHECK(slurp(p.run1 / "ckpt_final.bin") == slurp(p.run2 / "ckpt_final.bin"));
  CHECK(!slurp(p.run1 / "ckpt_final.bin").empty());
  CHECK(lines_of(slurp(p.run1 / "train_timing.csv")).size() == 4);

  // config that disagrees with the dataset manifest is rejected up front
  RunResult clash = run("train --config " + p.cfg_file.string() +
                        " --set t_in=12 --dataset " + p.ds.string() + " --out " +
                        (work() / "clash").string());
  CHECK(clash.code == 1);
  CHECK(clash.err ==
        "config error: config does not match the dataset manifest; differing fields: t_in\n");
}

TEST_CASE("eval reports the model against the baseline") {
  const Pipeline& p = pipe();
  fs::path ev = work() / "ev";
  RunResult r = run("eval --checkpoint " + (p.run1 / "ckpt_final.bin").string() + " --dataset " +
                    p.ds.string() + " --out " + ev.string());
  REQUIRE(r.code == 0);

  std::string csv = slurp(ev / "eval_metrics.csv");
  CHECK(csv == r.out);
  auto rows = lines_of(csv);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "row,split,ade_1s,ade_2s,ade_3s,fde_1s,fde_2s,fde_3s,param_count");
  auto model = split_csv(rows[1]);
  auto cv = split_csv(rows[2]);
  REQUIRE(model.size() == 9);
  CHECK(model[0] == "model");
  CHECK(model[1] == "val");
  CHECK(cv[0] == "constant_velocity");
  CHECK(cv[8] == "0");
  CHECK(model[8] == std::to_string(p.param_count));
  for (int c = 2; c <= 7; ++c) {
    CHECK(std::stod(model[size_t(c)]) > 0.0);
    CHECK(std::stod(cv[size_t(c)]) > 0.0);
  }
  CHECK(fs::exists(ev / "eval_timing.csv"));

  RunResult all = run("eval --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                      " --dataset " + p.ds.string() + " --split all --out " +
                      (work() / "ev_all").string());
  REQUIRE(all.code == 0);
  auto all_rows = lines_of(all.out);
  REQUIRE(all_rows.size() == 7);
  CHECK(split_csv(all_rows[1])[1] == "train");
  CHECK(split_csv(all_rows[3])[1] == "val");
  CHECK(split_csv(all_rows[5])[1] == "test");

  // on straight noise-free lanes the constant-velocity row collapses to zero
  RunResult st = run("eval --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                     " --set curvature_min=0 --set curvature_max=0 --set noise_sigma=0" +
                     " --dataset " + p.straight_ds.string() + " --out " +
                     (work() / "ev_straight").string());
  REQUIRE(st.code == 0);
  auto st_cv = split_csv(lines_of(st.out)[2]);
  for (int c = 2; c <= 7; ++c) CHECK(std::stod(st_cv[size_t(c)]) < 1e-4);

  RunResult mismatch = run("eval --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                           " --set t_out=30 --dataset " + p.ds.string() + " --out " +
                           (work() / "ev_bad").string());
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err ==
        "config error: config does not match the dataset manifest; differing fields: t_out\n");
}

TEST_CASE("predict renders the scene and its forecast") {
  const Pipeline& p = pipe();
  Dataset ds = load_dataset(p.ds.string());
  const Scene& scene = ds.val[0];
  fs::path scene_file = p.ds / (scene.id + ".csv");
  fs::path out = work() / "pred";

  RunResult r = run("predict --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                    " --scene " + scene_file.string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  std::string txt = slurp(out / "prediction.txt");
  CHECK(txt == r.out);
  auto rows = lines_of(txt);
  REQUIRE(rows.size() == 1);
  std::istringstream is(rows[0]);
  std::string id;
  is >> id;
  CHECK(id == scene.id);
  std::vector<std::string> toks;
  std::string t;
  while (is >> t) toks.push_back(t);
  CHECK(toks.size() == size_t(2 * 15 + 6));  // desk t_out plus two metric triples

  std::string svg = slurp(out / "prediction.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.rfind("</svg>\n") == svg.size() - 7);
  CHECK(count_of(svg, "<g class=\"layer\"") == 4);
  CHECK(count_of(svg, "</g>") == count_of(svg, "<g "));
  CHECK(svg.find("id=\"truth\"") != std::string::npos);
  CHECK(svg.find("scale(1,-1)") != std::string::npos);
  CHECK(svg.find("class=\"legend\"") != std::string::npos);
  for (const char* color : {"#9aa0a6", "#1a73e8", "#188038", "#d93025"})
    CHECK(svg.find(color) != std::string::npos);

  // the drawn prediction is the reported prediction, digit for digit
  size_t pred_g = svg.find("id=\"prediction\"");
  REQUIRE(pred_g != std::string::npos);
  size_t pts = svg.find("points=\"", pred_g);
  REQUIRE(pts != std::string::npos);
  pts += 8;
  std::string attr = svg.substr(pts, svg.find('"', pts) - pts);
  for (char& c : attr)
    if (c == ',') c = ' ';
  std::istringstream ps(attr);
  for (size_t k = 0; k < size_t(2 * 15); ++k) {
    std::string coord;
    REQUIRE((ps >> coord));
    CHECK(coord == toks[k]);
  }

  // a scene without truth drops the metrics and the truth layer
  Scene blind = scene;
  blind.ego_future.clear();
  fs::path blind_file = work() / "blind.csv";
  save_scene(blind, blind_file.string());
  RunResult rb = run("predict --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                     " --scene " + blind_file.string() + " --out " + (work() / "pred2").string());
  REQUIRE(rb.code == 0);
  auto blind_rows = lines_of(slurp(work() / "pred2" / "prediction.txt"));
  REQUIRE(blind_rows.size() == 1);
  std::istringstream bs(blind_rows[0]);
  size_t n = 0;
  while (bs >> t) ++n;
  CHECK(n == size_t(1 + 2 * 15));
  std::string blind_svg = slurp(work() / "pred2" / "prediction.svg");
  CHECK(count_of(blind_svg, "<g class=\"layer\"") == 3);
  CHECK(blind_svg.find("id=\"truth\"") == std::string::npos);

  // a frozen ego track earns a warning line
  Scene frozen = scene;
  for (auto& pt : frozen.agents[size_t(frozen.ego)]) pt = Vec2(1.5, -2.0);
  frozen.ego_future.clear();
  fs::path frozen_file = work() / "frozen.csv";
  save_scene(frozen, frozen_file.string());
  RunResult rf = run("predict --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                     " --scene " + frozen_file.string() + " --out " + (work() / "pred3").string());
  REQUIRE(rf.code == 0);
  auto frozen_rows = lines_of(slurp(work() / "pred3" / "prediction.txt"));
  REQUIRE(frozen_rows.size() == 2);
  CHECK(frozen_rows[1] == "warning degenerate ego heading; identity rotation used");
}

TEST_CASE("the equivariance audit passes the full model and fails the ablation") {
  const Pipeline& p = pipe();
  fs::path out = work() / "audit";
  RunResult r = run("check-equivariance --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                    " --dataset " + p.ds.string() + " --trials 2 --out " + out.string());
  CHECK(r.code == 0);
  std::string report = slurp(out / "equivariance_audit.txt");
  CHECK(report == r.out);
  auto rows = lines_of(report);
  REQUIRE(rows.size() >= 4);
  CHECK(rows[rows.size() - 1] == "result PASS");
  CHECK(rows[rows.size() - 2] == "threshold 1e-08");
  CHECK(rows[rows.size() - 3].find("max_deviation ") == 0);
  CHECK(std::stod(rows[rows.size() - 3].substr(14)) < 1e-8);
  CHECK(rows[rows.size() - 4] == "scenes 6 trials 2");
  CHECK(count_of(report, "scene scene_") == 6);

  // translating the map without rotating it breaks rotation equivariance
  RunResult fail = run("check-equivariance --random-params --config " + p.cfg_file.string() +
                       " --set map_mode=translate_only --dataset " + p.ds.string() +
                       " --trials 2");
  CHECK(fail.code == 3);
  CHECK(fail.out.find("result FAIL\n") != std::string::npos);

  // dropping the map entirely is equivariant by construction
  RunResult none = run("check-equivariance --random-params --config " + p.cfg_file.string() +
                       " --set map_mode=none --dataset " + p.ds.string() + " --trials 2");
  CHECK(none.code == 0);

  RunResult neither =
      run("check-equivariance --dataset " + p.ds.string() + " --trials 2");
  CHECK(neither.code == 1);
  CHECK(neither.err ==
        "config error: check-equivariance needs --checkpoint or --random-params with --config\n");

  RunResult zero = run("check-equivariance --checkpoint " +
                       (p.run1 / "ckpt_final.bin").string() + " --dataset " + p.ds.string() +
                       " --trials 0");
  CHECK(zero.code == 1);
  CHECK(zero.err == "config error: --trials must be >= 1\n");
}

TEST_CASE("exit codes separate usage, data and audit failures") {
  const Pipeline& p = pipe();
  CHECK(run("").code == 1);
  CHECK(run("--bogus-flag").code == 1);
  CHECK(run("gen --config").code == 1);
  CHECK(run("--help").code == 0);

  RunResult missing = run("eval --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                          " --dataset " + (work() / "no_such_ds").string() + " --out " +
                          (work() / "ev_missing").string());
  CHECK(missing.code == 2);
  CHECK(missing.err.find("data error: no manifest.json in ") == 0);

  RunResult no_scene = run("predict --checkpoint " + (p.run1 / "ckpt_final.bin").string() +
                           " --scene " + (work() / "ghost.csv").string() + " --out " +
                           (work() / "pred_missing").string());
  CHECK(no_scene.code == 2);
  CHECK(no_scene.err.find("data error: cannot open scene file:") == 0);

  RunResult no_ckpt = run("eval --checkpoint " + (work() / "ghost.bin").string() + " --dataset " +
                          p.ds.string() + " --out " + (work() / "ev_nockpt").string());
  CHECK(no_ckpt.code == 2);
}
