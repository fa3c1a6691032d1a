#include "eqmap/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "eqmap/errors.hpp"
#include "eqmap/rng.hpp"
#include "eqmap/svg.hpp"

namespace eqmap {

namespace {

void accumulate(SplitMetrics& acc, const std::map<int, double>& ade,
                const std::map<int, double>& fde) {
  for (const auto& [h, v] : ade) acc.ade[h] += v;
  for (const auto& [h, v] : fde) acc.fde[h] += v;
  acc.scenes += 1;
}

void finish_mean(SplitMetrics& acc) {
  if (acc.scenes == 0) return;
  for (auto& [h, v] : acc.ade) v /= acc.scenes;
  for (auto& [h, v] : acc.fde) v /= acc.scenes;
}

}  // namespace

SplitMetrics eval_model(ParameterStore& store, const std::vector<Scene>& scenes,
                        const RunConfig& cfg) {
  SplitMetrics acc;
  for (const Scene& s : scenes) {
    if (s.ego_future.empty())
      throw DataError("eval: scene " + s.id + " has no ground truth");
    ModelContext mc(store, nullptr);
    ForwardOut fo = forward_model(mc, s, cfg);
    accumulate(acc, fo.report.ade, fo.report.fde);
  }
  finish_mean(acc);
  return acc;
}

SplitMetrics eval_baseline(const std::vector<Scene>& scenes, const RunConfig& cfg) {
  SplitMetrics acc;
  for (const Scene& s : scenes) {
    if (s.ego_future.empty())
      throw DataError("eval: scene " + s.id + " has no ground truth");
    std::vector<Vec2> pred =
        constant_velocity_baseline(s.agents[size_t(s.ego)], cfg.t_out);
    std::map<int, double> ade, fde;
    compute_metrics(pred, s.ego_future, cfg.rate_hz, ade, fde);
    accumulate(acc, ade, fde);
  }
  finish_mean(acc);
  return acc;
}

std::string train_log_csv(const std::vector<EpochRow>& rows, const std::string& cfg_hash) {
  std::string s =
      "epoch,train_loss,val_ade_1s,val_ade_2s,val_ade_3s,val_fde_1s,val_fde_2s,val_fde_3s,"
      "config_hash\n";
  for (const EpochRow& r : rows) {
    s += std::to_string(r.epoch) + "," + fmt9(r.train_loss);
    for (int h : {1, 2, 3}) s += "," + fmt9(r.val_ade.at(h));
    for (int h : {1, 2, 3}) s += "," + fmt9(r.val_fde.at(h));
    s += "," + cfg_hash + "\n";
  }
  return s;
}

std::string timing_csv(const std::vector<EpochRow>& rows) {
  std::string s = "epoch,seconds\n";
  char buf[64];
  for (const EpochRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.3f\n", r.epoch, r.seconds);
    s += buf;
  }
  return s;
}

TrainResult train_model(ParameterStore& store, const Dataset& data, const RunConfig& cfg,
                        const std::string& out_dir) {
  if (data.train.empty()) throw DataError("train: dataset has no training split");
  const std::string cfg_text = canonical_text(cfg);
  const std::string cfg_hash = config_hash(cfg);
  TrainResult result;

  std::vector<int> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  const int batch = cfg.batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = Rng(cfg.seed).fork("epoch/" + std::to_string(epoch));
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = size_t(rng.next_int(int(i)));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t take = std::min(size_t(batch), order.size() - pos);
      store.zero_grads();
      for (size_t b = 0; b < take; ++b) {
        const Scene& scene = data.train[size_t(order[pos + b])];
        Tape tape;
        ModelContext mc(store, &tape);
        ForwardOut fo = forward_model(mc, scene, cfg);
        Tensor loss = ade_loss(fo.pred, trajectory_tensor(scene.ego_future));
        const double lv = loss.scalar();
        if (!std::isfinite(lv))
          throw DataError("training diverged: non-finite loss at epoch " +
                          std::to_string(epoch) + ", scene " + scene.id +
                          "; last saved checkpoint retained");
        loss_sum += lv;
        tape.backward(scale(loss, 1.0 / double(take)));
        mc.harvest();
      }
      store.ensure_grads();
      adam_step(store, cfg.lr);
      pos += take;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / double(order.size());
    SplitMetrics vm = eval_model(store, data.val, cfg);
    row.val_ade = vm.ade;
    row.val_fde = vm.fde;
    if (vm.scenes == 0)
      for (int h : {1, 2, 3}) {
        row.val_ade[h] = 0;
        row.val_fde[h] = 0;
      }
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows.push_back(row);

    save_checkpoint(store, cfg_text,
                    out_dir + "/ckpt_epoch_" + std::to_string(epoch) + ".bin");
    write_text_file(out_dir + "/train_log.csv", train_log_csv(result.rows, cfg_hash));
    write_text_file(out_dir + "/train_timing.csv", timing_csv(result.rows));
    std::printf("epoch %d/%d train_loss %s val_ade_3s %s\n", epoch, cfg.epochs,
                fmt9(row.train_loss).c_str(), fmt9(row.val_ade.at(3)).c_str());
    std::fflush(stdout);
  }

  save_checkpoint(store, cfg_text, out_dir + "/ckpt_final.bin");
  std::vector<double> curve;
  curve.reserve(result.rows.size());
  for (const EpochRow& r : result.rows) curve.push_back(r.train_loss);
  write_text_file(out_dir + "/loss_curve.svg", loss_curve_svg(curve));
  return result;
}

}  // namespace eqmap
