#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "crossda/dataset.hpp"
#include "crossda/error.hpp"
#include "crossda/eval.hpp"
#include "crossda/labels.hpp"
#include "crossda/nn/checkpoint.hpp"
#include "crossda/pipeline.hpp"
#include "crossda/seg.hpp"
#include "crossda/style.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crossda;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Pipeline config (JSON)");
  sub->add_option("--seed", c.seed, "Seed override");
  sub->add_option("--out", c.out, "Output file or directory");
}

std::string need_out(const Common& c) {
  if (c.out.empty()) throw Error(Errc::validation, "--out is required");
  return c.out;
}

json config_json(const Common& c) {
  if (c.config.empty()) return json::object();
  std::ifstream f(c.config);
  if (!f) throw Error(Errc::validation, "config file not found: " + c.config);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(Errc::validation, "config " + c.config + ": " + e.what());
  }
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + out + " for writing");
  f << j.dump(2) << "\n";
}

std::string tile_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu.mbt", prefix, i);
  return buf;
}

std::vector<Raster> manifest_images(const fs::path& manifest) {
  std::vector<Raster> out;
  for (const auto& r : read_manifest(manifest)) out.push_back(raster_read(resolve(manifest, r.image_path)));
  return out;
}

std::vector<std::uint8_t> mask_from(const fs::path& p) {
  const Raster m = raster_read(p);
  std::vector<std::uint8_t> out(m.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.valid(i) && m.samples()[i] != 0.0f ? 1 : 0;
  return out;
}

Raster general_to_index(const Raster& r, std::size_t k, bool already_index) {
  Raster out = r;
  auto s = out.samples();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    if (!labelled_pixel(r, p)) continue;
    const int v = static_cast<int>(s[p]) - (already_index ? 0 : 1);
    if (v < 0 || static_cast<std::size_t>(v) >= k) {
      throw Error(Errc::range, "label value " + std::to_string(static_cast<int>(s[p])) + " at pixel " +
                                   std::to_string(p) + " is outside " + std::to_string(k) + " classes");
    }
    s[p] = static_cast<float>(v);
  }
  return out;
}

int exit_code(Errc c) { return c == Errc::validation || c == Errc::invalid_argument ? 1 : 2; }

}  // namespace

int main(int argc, char** argv) {
  pipeline::tune_allocator();
  auto logger = spdlog::stderr_color_mt("crossda");
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"Cross-sensor domain adaptation toolkit"};
  app.require_subcommand(1, 1);
  Common common;

  // ingest
  std::vector<std::string> ingest_in;
  auto* ingest = app.add_subcommand("ingest", "Stack single-band rasters into one multiband raster");
  add_common(ingest, common);
  ingest->add_option("inputs", ingest_in, "Single-band rasters in band order")->required();

  // stats
  std::string stats_in;
  std::size_t stats_bins = 256;
  auto* stats = app.add_subcommand("stats", "Per-band statistics as JSON");
  add_common(stats, common);
  stats->add_option("--in", stats_in)->required();
  stats->add_option("--bins", stats_bins);

  // shift
  std::string shift_in, shift_mask;
  std::vector<std::int64_t> shift_offsets;
  double shift_percentile = 0.005;
  auto* shift = app.add_subcommand("shift", "Subtract per-band offsets and apply a nodata mask");
  add_common(shift, common);
  shift->add_option("--in", shift_in)->required();
  shift->add_option("--offsets", shift_offsets)->delimiter(',');
  shift->add_option("--percentile", shift_percentile);
  shift->add_option("--mask", shift_mask, "U8 raster, nonzero = nodata");

  // tile
  std::string tile_image, tile_labels;
  TileSpec tile_spec = TileSpec::square(512);
  std::optional<std::size_t> tile_stride;
  auto* tile = app.add_subcommand("tile", "Cut image and label tiles");
  add_common(tile, common);
  tile->add_option("--image", tile_image)->required();
  tile->add_option("--labels", tile_labels)->required();
  tile->add_option("--size", tile_spec.tile_size);
  tile->add_option("--stride", tile_stride);
  tile->add_option("--min-valid", tile_spec.min_valid_fraction);

  // recode
  std::string recode_in, recode_from = std::string(labels::kGeneral), recode_cross, recode_scheme_b;
  bool recode_manifest = false, recode_nodata = false;
  auto* recode = app.add_subcommand("recode", "Recode labels to the general scheme");
  add_common(recode, common);
  recode->add_option("--in", recode_in);
  recode->add_option("--from", recode_from);
  recode->add_flag("--unknown-to-nodata", recode_nodata);
  recode->add_flag("--manifest", recode_manifest, "Print the built-in schemes and maps");
  recode->add_option("--crosswalk", recode_cross, "Second label raster for a crosswalk matrix");
  recode->add_option("--scheme-b", recode_scheme_b);

  // train-style
  std::string ts_source, ts_target;
  std::optional<std::int64_t> ts_steps;
  auto* train_style = app.add_subcommand("train-style", "Train both generator/discriminator pairs");
  add_common(train_style, common);
  train_style->add_option("--source", ts_source, "Source tile manifest")->required();
  train_style->add_option("--target", ts_target, "Target tile manifest")->required();
  train_style->add_option("--steps", ts_steps);

  // stylize
  std::string sty_manifest, sty_target, sty_mode = "stats", sty_generator;
  auto* stylize = app.add_subcommand("stylize", "Stylize source tiles toward the target domain");
  add_common(stylize, common);
  stylize->add_option("--manifest", sty_manifest, "Source tile manifest")->required();
  stylize->add_option("--target", sty_target, "Target tile manifest")->required();
  stylize->add_option("--mode", sty_mode)->check(CLI::IsMember({"stats", "gan"}));
  stylize->add_option("--generator", sty_generator, "Source-to-target generator checkpoint");

  // mix
  std::string mix_originals, mix_stylized;
  auto* mix = app.add_subcommand("mix", "Build the mixed dataset manifest");
  add_common(mix, common);
  mix->add_option("--originals", mix_originals)->required();
  mix->add_option("--stylized", mix_stylized)->required();

  // train-seg
  std::string seg_manifest;
  std::vector<std::string> seg_means_from;
  std::optional<std::int64_t> seg_steps;
  std::optional<std::size_t> seg_classes;
  auto* train_seg = app.add_subcommand("train-seg", "Train the segmenter");
  add_common(train_seg, common);
  train_seg->add_option("--manifest", seg_manifest)->required();
  train_seg->add_option("--means-from", seg_means_from, "Manifests pooled for band means")->delimiter(',');
  train_seg->add_option("--steps", seg_steps);
  train_seg->add_option("--classes", seg_classes);

  // infer
  std::string inf_ckpt, inf_manifest;
  auto* infer = app.add_subcommand("infer", "Predict label tiles");
  add_common(infer, common);
  infer->add_option("--checkpoint", inf_ckpt)->required();
  infer->add_option("--manifest", inf_manifest)->required();

  // eval
  std::string ev_ref, ev_pred, ev_baseline;
  std::size_t ev_classes = 8, ev_points = 0;
  bool ev_index = false;
  auto* evalc = app.add_subcommand("eval", "IoU report for a prediction against a reference");
  add_common(evalc, common);
  evalc->add_option("--ref", ev_ref)->required();
  evalc->add_option("--pred", ev_pred)->required();
  evalc->add_option("--baseline", ev_baseline, "Baseline prediction for a comparative report");
  evalc->add_option("--classes", ev_classes);
  evalc->add_option("--points", ev_points, "Random validation points");
  evalc->add_flag("--index", ev_index, "Values are class indices rather than general codes");

  // synth
  std::optional<std::size_t> syn_tiles;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic two-domain benchmark");
  add_common(synth, common);
  synth->add_option("--tiles", syn_tiles);

  // run
  std::optional<std::string> run_mode;
  auto* runc = app.add_subcommand("run", "Run the whole pipeline from a config");
  add_common(runc, common);
  runc->add_option("--mode", run_mode)->check(CLI::IsMember({"stats", "gan"}));

  // render
  std::string ren_in, ren_scheme = std::string(labels::kGeneral);
  auto* render = app.add_subcommand("render", "Render a label raster as PPM");
  add_common(render, common);
  render->add_option("--in", ren_in)->required();
  render->add_option("--scheme", ren_scheme);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    const auto& schemes = labels::builtin_schemes();
    if (*ingest) {
      std::vector<Raster> bands;
      for (const auto& p : ingest_in) bands.push_back(raster_read(p));
      raster_write(composite_bands(bands), need_out(common));
    } else if (*stats) {
      const auto s = band_stats(raster_read(stats_in), stats_bins);
      json bands = json::array();
      for (const auto& b : s.bands) {
        bands.push_back({{"min", b.min}, {"max", b.max}, {"mean", b.mean}, {"std", b.std}, {"valid", b.valid_count},
                         {"histogram", {{"lower_edge", b.histogram.lower_edge},
                                        {"bin_width", b.histogram.bin_width},
                                        {"counts", b.histogram.counts}}}});
      }
      emit({{"bands", bands}}, common.out);
    } else if (*shift) {
      Raster img = raster_read(shift_in);
      if (!shift_mask.empty()) img = set_nodata_mask(img, mask_from(shift_mask));
      auto offsets = shift_offsets;
      if (offsets.empty()) offsets = estimate_shift_offsets(band_stats(img, 4096), shift_percentile);
      if (offsets.size() != img.bands()) {
        throw Error(Errc::validation, "--offsets needs " + std::to_string(img.bands()) + " values");
      }
      raster_write(shift_values(img, offsets), need_out(common));
      spdlog::info("shift offsets {}", json(offsets).dump());
    } else if (*tile) {
      tile_spec.stride = tile_stride.value_or(tile_spec.tile_size);
      try {
        tile_spec.validate();
      } catch (const Error& e) {
        throw Error(Errc::validation, e.what());
      }
      const fs::path dir = need_out(common);
      fs::create_directories(dir);
      const auto tiles = tile_dataset(raster_read(tile_image), raster_read(tile_labels), tile_spec);
      std::vector<SampleRecord> records;
      for (std::size_t i = 0; i < tiles.size(); ++i) {
        raster_write(tiles[i].image, dir / tile_name("img", i));
        raster_write(tiles[i].labels, dir / tile_name("lbl", i));
        records.push_back({tile_name("img", i), tile_name("lbl", i), "original"});
      }
      write_manifest(dir / "tiles.jsonl", records);
      spdlog::info("{} tiles written to {}", tiles.size(), dir.string());
    } else if (*recode) {
      if (recode_manifest) {
        emit(labels::builtin_manifest(), common.out);
      } else if (!recode_cross.empty()) {
        if (recode_in.empty()) throw Error(Errc::validation, "--in is required");
        emit(labels::crosswalk(raster_read(recode_in), raster_read(recode_cross), recode_from, recode_scheme_b).to_json(),
             common.out);
      } else {
        if (recode_in.empty()) throw Error(Errc::validation, "--in is required");
        auto map = schemes.to_general(recode_from);
        if (recode_nodata) map.unknown_policy = labels::UnknownPolicy::map_to_nodata;
        raster_write(labels::recode(raster_read(recode_in), map), need_out(common));
      }
    } else if (*train_style) {
      const json cj = config_json(common);
      auto st = style::StyleTrainConfig::from_json(cj.value("style", json::object()).value("train", json::object()));
      if (common.seed) st.seed = *common.seed;
      if (ts_steps) st.steps = *ts_steps;
      const auto src = manifest_images(ts_source);
      const auto tgt = manifest_images(ts_target);
      const auto ss = style::extract_domain_style(src), tsy = style::extract_domain_style(tgt);
      const fs::path dir = need_out(common);
      fs::create_directories(dir);
      const auto models = style::train_style(src, tgt, ss, tsy, st, dir);
      emit({{"source", ss.to_json()}, {"target", tsy.to_json()}}, (dir / "styles.json").string());
      spdlog::info("discriminator tail accuracy {:.4f}", models.tail_accuracy());
    } else if (*stylize) {
      const auto originals = read_manifest(sty_manifest);
      const auto src = manifest_images(sty_manifest);
      style::StylizeInputs in{style::parse_style_mode(sty_mode), style::extract_domain_style(src),
                              style::extract_domain_style(manifest_images(sty_target)), std::nullopt};
      if (!sty_generator.empty()) in.generator_checkpoint = sty_generator;
      const auto out = style::stylize_dataset(src, in);
      const fs::path dir = need_out(common);
      fs::create_directories(dir);
      std::vector<SampleRecord> records;
      for (std::size_t i = 0; i < out.size(); ++i) {
        raster_write(out[i], dir / tile_name("img", i));
        records.push_back({tile_name("img", i), fs::absolute(resolve(sty_manifest, originals[i].label_path)).string(),
                           "stylized"});
      }
      write_manifest(dir / "stylized.jsonl", records);
    } else if (*mix) {
      const fs::path out = need_out(common);
      const auto rebase = [&](const fs::path& m, const std::string& p) {
        return fs::absolute(resolve(m, p)).lexically_normal().string();
      };
      std::vector<SampleRecord> originals;
      for (auto r : read_manifest(mix_originals)) {
        r.image_path = rebase(mix_originals, r.image_path);
        r.label_path = rebase(mix_originals, r.label_path);
        originals.push_back(r);
      }
      std::vector<std::string> stylized;
      for (const auto& r : read_manifest(mix_stylized)) stylized.push_back(rebase(mix_stylized, r.image_path));
      const auto mixed = build_mixed_dataset(originals, stylized);
      validate_mixed_dataset(mixed);
      write_manifest(out, mixed);
    } else if (*train_seg) {
      const json cj = config_json(common);
      auto sc = seg::SegTrainConfig::from_json(cj.value("segmentation", json::object()));
      if (common.seed) sc.seed = *common.seed;
      if (seg_steps) sc.steps = *seg_steps;
      if (seg_classes) sc.num_classes = *seg_classes;
      std::vector<seg::SegSample> samples;
      for (const auto& r : read_manifest(seg_manifest)) {
        samples.push_back({raster_read(resolve(seg_manifest, r.image_path)), raster_read(resolve(seg_manifest, r.label_path))});
      }
      std::vector<Raster> pool;
      if (seg_means_from.empty()) {
        for (const auto& s : samples) pool.push_back(s.image);
      } else {
        for (const auto& m : seg_means_from) {
          auto imgs = manifest_images(m);
          std::move(imgs.begin(), imgs.end(), std::back_inserter(pool));
        }
      }
      const auto means = seg::compute_band_means(pool);
      const fs::path out = need_out(common);
      const auto result = seg::train_seg(samples, sc, means, fs::path(out.string() + ".diag"));
      nn::save_checkpoint(out, result.params, {{"config", sc.to_json()}, {"means", means}});
      seg::write_seg_log(fs::path(out.string() + ".log.csv"), result.log);
    } else if (*infer) {
      const auto ckpt = nn::load_checkpoint(inf_ckpt);
      if (!ckpt.meta.contains("means")) throw Error(Errc::validation, "checkpoint carries no band means");
      const auto means = ckpt.meta.at("means").get<seg::BandMeans>();
      const auto preds = seg::infer(ckpt.params, manifest_images(inf_manifest), means);
      const fs::path dir = need_out(common);
      fs::create_directories(dir);
      std::vector<SampleRecord> records;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        Raster g = preds[i];
        for (auto& v : g.samples()) {
          if (v != kLabelNodata) v = static_cast<float>(labels::general_code(static_cast<std::uint8_t>(v)));
        }
        raster_write(g, dir / tile_name("pred", i));
      }
      spdlog::info("{} predictions written to {}", preds.size(), dir.string());
    } else if (*evalc) {
      if (ev_classes < 1 || ev_classes > 8) throw Error(Errc::validation, "--classes must be in [1, 8]");
      const Raster ref = general_to_index(raster_read(ev_ref), ev_classes, ev_index);
      const Raster pred = general_to_index(raster_read(ev_pred), ev_classes, ev_index);
      const auto rep = eval::iou_from_confusion(eval::confusion(ref, pred, ev_classes));
      std::vector<std::string> names;
      for (std::size_t c = 0; c < ev_classes; ++c) {
        names.push_back(schemes.general.name_of(labels::general_code(static_cast<std::uint8_t>(c))));
      }
      const std::uint64_t seed = common.seed.value_or(17);
      if (!ev_baseline.empty()) {
        eval::ReportInputs in;
        in.adapted = rep;
        in.class_names = names;
        const Raster base = general_to_index(raster_read(ev_baseline), ev_classes, ev_index);
        in.baseline = eval::iou_from_confusion(eval::confusion(ref, base, ev_classes));
        if (ev_points > 0) {
          in.points = eval::random_point_validation(ref, pred, ev_points, seed);
          in.baseline_points = eval::random_point_validation(ref, base, ev_points, seed);
        }
        emit(eval::build_report(in), common.out);
      } else {
        json j = eval::iou_json(rep, names);
        if (ev_points > 0) {
          const auto pts = eval::random_point_validation(ref, pred, ev_points, seed);
          j["points"] = {{"seed", seed}, {"n", pts.n}, {"agreement", eval::round_to(pts.agreement, 4)}};
        }
        emit(j, common.out);
      }
    } else if (*synth) {
      pipeline::SynthSpec spec;
      const json cj = config_json(common);
      if (!cj.empty()) spec = pipeline::SynthSpec::from_json(cj);
      if (common.seed) spec.seed = *common.seed;
      if (syn_tiles) spec.tiles_per_domain = *syn_tiles;
      pipeline::write_synth(pipeline::synth_benchmark(spec), need_out(common));
    } else if (*runc) {
      if (common.config.empty()) throw Error(Errc::validation, "--config is required");
      auto cfg = pipeline::load_config(common.config);
      if (common.seed) {
        cfg.seed = *common.seed;
        cfg.style_train.seed = cfg.seg_train.seed = cfg.eval_seed = *common.seed;
      }
      if (!common.out.empty()) cfg.output_dir = fs::absolute(common.out);
      if (run_mode) cfg.style_mode = style::parse_style_mode(*run_mode);
      const auto summary = pipeline::run(cfg);
      spdlog::info("run finished: {} stages executed, {} skipped; report at {}", summary.executed.size(),
                   summary.skipped.size(), summary.report.string());
    } else if (*render) {
      eval::render_labelmap(raster_read(ren_in), schemes.scheme(ren_scheme), need_out(common));
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
