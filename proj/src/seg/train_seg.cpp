#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "crossda/error.hpp"
#include "crossda/nn/checkpoint.hpp"
#include "crossda/nn/losses.hpp"
#include "crossda/nn/optim.hpp"
#include "crossda/seg.hpp"

namespace crossda::seg {

void SegTrainConfig::validate() const {
  if (batch < 1) throw Error(Errc::validation, "segmentation batch must be >= 1");
  if (steps < 1) throw Error(Errc::validation, "segmentation steps must be >= 1");
  if (!(base_lr > 0)) throw Error(Errc::validation, "base_lr must be positive");
  if (!(weight_decay >= 0)) throw Error(Errc::validation, "weight_decay must be >= 0");
  if (!(power > 0)) throw Error(Errc::validation, "poly power must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw Error(Errc::validation, "Adam betas must lie in [0, 1)");
  }
  if (num_classes < 1 || num_classes > 8) throw Error(Errc::validation, "num_classes must be in [1, 8]");
}

nlohmann::json SegTrainConfig::to_json() const {
  return {{"batch", batch}, {"steps", steps}, {"base_lr", base_lr}, {"weight_decay", weight_decay},
          {"power", power}, {"beta1", beta1}, {"beta2", beta2},     {"augment", augment},
          {"seed", seed},   {"num_classes", num_classes}};
}

SegTrainConfig SegTrainConfig::from_json(const nlohmann::json& j) {
  SegTrainConfig c;
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.power = j.value("power", c.power);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.augment = j.value("augment", c.augment);
  c.seed = j.value("seed", c.seed);
  c.num_classes = j.value("num_classes", c.num_classes);
  return c;
}

void write_seg_log(const std::filesystem::path& path, std::span<const SegLogRow> log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f << "step,lr,loss\n" << std::setprecision(9);
  for (const auto& r : log) f << r.step << ',' << r.lr << ',' << r.loss << '\n';
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

SegTrainResult train_seg(std::span<const SegSample> samples, const SegTrainConfig& cfg, const BandMeans& means,
                         const std::optional<std::filesystem::path>& diag_checkpoint) {
  cfg.validate();
  if (samples.empty()) throw Error(Errc::empty_input, "train_seg: empty dataset");

  std::mt19937_64 master(cfg.seed);
  SegTrainResult result;
  result.params = make_segmenter(cfg.num_classes, master());
  std::mt19937_64 order_rng(master());
  std::mt19937_64 aug_rng(master());

  nn::AdamState opt(nn::AdamConfig{cfg.base_lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay});
  const nn::PolySchedule schedule{cfg.base_lr, cfg.steps, cfg.power};

  std::vector<std::size_t> order(samples.size());
  std::size_t cursor = order.size();
  std::vector<Raster> images, labels;
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    images.clear();
    labels.clear();
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const SegSample& s = samples[order[cursor++]];
      if (cfg.augment) {
        auto [img, lbl] = augment(s.image, s.labels, aug_rng);
        images.push_back(std::move(img));
        labels.push_back(std::move(lbl));
      } else {
        images.push_back(s.image);
        labels.push_back(s.labels);
      }
    }
    std::vector<const Raster*> ip, lp;
    for (std::size_t i = 0; i < images.size(); ++i) {
      ip.push_back(&images[i]);
      lp.push_back(&labels[i]);
    }
    const auto targets = prepare_targets(ip, lp, cfg.num_classes);
    if (std::all_of(targets.begin(), targets.end(), [](std::uint8_t t) { return t == kLabelNodata; })) {
      result.log.push_back({step, nn::poly_lr(schedule, step), std::numeric_limits<double>::quiet_NaN()});
      continue;
    }

    const double lr = nn::poly_lr(schedule, step);
    nn::Tape tape;
    const auto p = result.params.bind(tape, true);
    const nn::Var logits = segmenter_forward<float>(tape, p, tape.constant(prepare_images(ip, means)));
    const nn::Var loss = nn::softmax_xent(tape, logits, targets);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) {
      if (diag_checkpoint) nn::save_checkpoint(*diag_checkpoint, result.params, {{"step", step}, {"diagnostic", true}});
      throw Error(Errc::non_finite, "segmentation loss is not finite at step " + std::to_string(step));
    }
    result.params.zero_grad();
    tape.backward(loss);
    nn::adam_step(result.params, opt, lr);
    result.log.push_back({step, lr, value});
    if (step % 100 == 0 || step + 1 == cfg.steps) spdlog::info("train-seg step {} lr {:.3e} loss {:.4f}", step, lr, value);
  }
  return result;
}

}  // namespace crossda::seg
