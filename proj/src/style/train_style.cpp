#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>

#include <spdlog/spdlog.h>

#include "crossda/dataset.hpp"
#include "crossda/error.hpp"
#include "crossda/nn/checkpoint.hpp"
#include "crossda/nn/losses.hpp"
#include "crossda/nn/optim.hpp"
#include "crossda/style.hpp"

namespace crossda::style {

void StyleTrainConfig::validate() const {
  if (steps < 1) throw Error(Errc::validation, "style training needs steps >= 1");
  if (batch < 1) throw Error(Errc::validation, "style training needs batch >= 1");
  if (!(lr_g > 0) || !(lr_d > 0)) throw Error(Errc::validation, "style learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw Error(Errc::validation, "Adam betas must lie in [0, 1)");
  }
  if (checkpoint_interval < 0) throw Error(Errc::validation, "checkpoint_interval must be >= 0");
}

nlohmann::json StyleTrainConfig::to_json() const {
  return {{"steps", steps}, {"batch", batch}, {"lr_g", lr_g},   {"lr_d", lr_d},
          {"beta1", beta1}, {"beta2", beta2}, {"seed", seed}, {"checkpoint_interval", checkpoint_interval}};
}

StyleTrainConfig StyleTrainConfig::from_json(const nlohmann::json& j) {
  StyleTrainConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  return c;
}

double StyleModels::tail_accuracy(std::size_t window) const {
  if (log.empty()) return 0.0;
  const std::size_t n = std::min(window, log.size());
  double s = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) s += 0.5 * (log[i].acc_st + log[i].acc_ts);
  return s / static_cast<double>(n);
}

void write_style_log(const std::filesystem::path& path, std::span<const StyleLogRow> log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f << "step,eq1_st,loss_d_st,loss_g_st,acc_st,eq1_ts,loss_d_ts,loss_g_ts,acc_ts\n";
  f << std::setprecision(9);
  for (const auto& r : log) {
    f << r.step << ',' << r.eq1_st << ',' << r.loss_d_st << ',' << r.loss_g_st << ',' << r.acc_st << ',' << r.eq1_ts
      << ',' << r.loss_d_ts << ',' << r.loss_g_ts << ',' << r.acc_ts << '\n';
  }
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

namespace {

struct PairResult {
  double eq1 = 0, loss_d = 0, loss_g = 0, acc = 0;
};

struct Pair {
  nn::ParameterSet* g;
  nn::ParameterSet* d;
  nn::AdamState* g_opt;
  nn::AdamState* d_opt;
};

bool finite_params(const nn::ParameterSet& ps) {
  for (const auto& p : ps) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

// One discriminator update followed by one generator update. `input` is the
// generator's domain, `real` the domain the discriminator guards.
PairResult step_pair(Pair pair, const nn::Tensor& input, const nn::Tensor& real, const nn::Tensor& style,
                     const StyleTrainConfig& cfg) {
  PairResult r;
  nn::Tape gt;
  const auto gp = pair.g->bind(gt, true);
  const nn::Var fake = generator_forward<float>(gt, gp, gt.constant(input), gt.constant(style));

  {
    nn::Tape dt;
    const auto dp = pair.d->bind(dt, true);
    const nn::Var d_real = discriminator_forward<float>(dt, dp, dt.constant(real));
    const nn::Var d_fake = discriminator_forward<float>(dt, dp, dt.constant(gt.value(fake)));
    const auto terms = nn::gan_terms(dt, d_real, d_fake);
    r.eq1 = terms.eq1;
    r.loss_d = dt.value(terms.loss_d)[0];
    r.acc = terms.accuracy;
    pair.d->zero_grad();
    dt.backward(terms.loss_d);
    nn::adam_step(*pair.d, *pair.d_opt, cfg.lr_d);
  }

  const nn::Var d_fake = discriminator_forward<float>(gt, pair.d->bind_frozen(gt), fake);
  const nn::Var loss_g = nn::generator_loss(gt, d_fake);
  r.loss_g = gt.value(loss_g)[0];
  pair.g->zero_grad();
  gt.backward(loss_g);
  nn::adam_step(*pair.g, *pair.g_opt, cfg.lr_g);
  return r;
}

void save_all(const StyleModels& m, const std::filesystem::path& dir, std::int64_t step, const std::string& suffix) {
  const nn::ParameterSet* sets[4] = {&m.g_st, &m.d_t, &m.g_ts, &m.d_s};
  const char* roles[4] = {"generator source_to_target", "discriminator target", "generator target_to_source",
                          "discriminator source"};
  for (std::size_t i = 0; i < 4; ++i) {
    std::string name = kStyleCheckpoints[i];
    if (!suffix.empty()) name.insert(name.size() - 5, suffix);
    nn::save_checkpoint(dir / name, *sets[i], {{"role", roles[i]}, {"step", step}});
  }
}

}  // namespace

StyleModels train_style(std::span<const Raster> source, std::span<const Raster> target,
                        const DomainStyle& source_style, const DomainStyle& target_style, const StyleTrainConfig& cfg,
                        const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  if (source.empty() || target.empty()) throw Error(Errc::empty_input, "train_style needs source and target tiles");
  std::vector<Raster> src, tgt;
  for (const auto& t : source) src.push_back(unit_tile(t));
  for (const auto& t : target) tgt.push_back(unit_tile(t));

  std::mt19937_64 master(cfg.seed);
  StyleModels m;
  m.g_st = make_generator(master());
  m.d_t = make_discriminator(master());
  m.g_ts = make_generator(master());
  m.d_s = make_discriminator(master());
  std::mt19937_64 sampler(master());

  const nn::AdamConfig gcfg{cfg.lr_g, cfg.beta1, cfg.beta2, 1e-8, 0.0};
  const nn::AdamConfig dcfg{cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8, 0.0};
  nn::AdamState opt_g_st(gcfg), opt_d_t(dcfg), opt_g_ts(gcfg), opt_d_s(dcfg);

  const nn::Tensor style_t = style_tensor<float>(target_style, cfg.batch);
  const nn::Tensor style_s = style_tensor<float>(source_style, cfg.batch);
  std::uniform_int_distribution<std::size_t> pick_s(0, src.size() - 1), pick_t(0, tgt.size() - 1);
  std::vector<const Raster*> bs(cfg.batch), bt(cfg.batch);

  if (out_dir) std::filesystem::create_directories(*out_dir);
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    for (auto& p : bs) p = &src[pick_s(sampler)];
    for (auto& p : bt) p = &tgt[pick_t(sampler)];
    const nn::Tensor xs = stack_tiles(std::span<const Raster* const>(bs));
    const nn::Tensor xt = stack_tiles(std::span<const Raster* const>(bt));

    StyleLogRow row;
    row.step = step;
    try {
      const auto st = step_pair({&m.g_st, &m.d_t, &opt_g_st, &opt_d_t}, xs, xt, style_t, cfg);
      const auto ts = step_pair({&m.g_ts, &m.d_s, &opt_g_ts, &opt_d_s}, xt, xs, style_s, cfg);
      row = {step, st.eq1, st.loss_d, st.loss_g, st.acc, ts.eq1, ts.loss_d, ts.loss_g, ts.acc};
      const bool finite = std::isfinite(st.eq1) && std::isfinite(st.loss_g) && std::isfinite(ts.eq1) &&
                          std::isfinite(ts.loss_g) && finite_params(m.g_st) && finite_params(m.d_t) &&
                          finite_params(m.g_ts) && finite_params(m.d_s);
      if (!finite) throw Error(Errc::non_finite, "non-finite loss or parameter");
    } catch (const Error& e) {
      if (e.code() != Errc::non_finite) throw;
      if (out_dir) {
        save_all(m, *out_dir, step, ".diag");
        write_style_log(*out_dir / "style_log.csv", m.log);
      }
      throw Error(Errc::non_finite, "style training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    m.log.push_back(row);
    if (step % 100 == 0 || step + 1 == cfg.steps) {
      spdlog::info("train-style step {} eq1 st {:.4f} ts {:.4f} acc st {:.3f} ts {:.3f}", step, row.eq1_st, row.eq1_ts,
                   row.acc_st, row.acc_ts);
    }
    if (out_dir && cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 && step + 1 < cfg.steps) {
      save_all(m, *out_dir, step + 1, "");
    }
  }
  if (out_dir) {
    save_all(m, *out_dir, cfg.steps, "");
    write_style_log(*out_dir / "style_log.csv", m.log);
  }
  return m;
}

}  // namespace crossda::style
