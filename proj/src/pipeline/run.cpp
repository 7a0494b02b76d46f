#include <malloc.h>

#include <cstdio>
#include <fstream>
#include <functional>

#include <spdlog/spdlog.h>

#include "crossda/dataset.hpp"
#include "crossda/error.hpp"
#include "crossda/eval.hpp"
#include "crossda/labels.hpp"
#include "crossda/nn/checkpoint.hpp"
#include "crossda/pipeline.hpp"

namespace crossda::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
}

namespace {

struct Stage {
  explicit Stage(std::string n) : name(std::move(n)) {}

  std::string name;
  json params = json::object();
  std::vector<std::pair<std::string, fs::path>> inputs;
  std::vector<std::string> outputs;  // relative to the output directory
  std::uint64_t seed = 0;
};

std::string strip_category(const Error& e) {
  const std::string what = e.what();
  const std::string prefix = std::string(errc_name(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

class Runner {
 public:
  explicit Runner(fs::path out) : out_(std::move(out)), manifest_(out_ / kStageManifest) {}

  const fs::path& out() const noexcept { return out_; }
  fs::path at(const std::string& rel) const { return out_ / rel; }
  RunSummary& summary() noexcept { return summary_; }

  void stage(const Stage& s, const std::function<void()>& body) {
    try {
      StageRecord rec;
      rec.stage = s.name;
      rec.seed = s.seed;
      std::string key_text = s.name + "\n" + s.params.dump() + "\n" + std::to_string(s.seed) + "\n";
      for (const auto& [name, path] : s.inputs) {
        rec.inputs[name] = sha256_path(path);
        key_text += name + "=" + rec.inputs[name] + "\n";
      }
      rec.key = sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(key_text.data()), key_text.size()));

      if (const StageRecord* prev = manifest_.find(s.name, rec.key); prev && outputs_match(s, *prev)) {
        spdlog::info("stage {}: up to date, skipped", s.name);
        summary_.skipped.push_back(s.name);
        return;
      }
      spdlog::info("stage {}: running", s.name);
      for (const auto& o : s.outputs) fs::remove_all(at(o));
      body();
      for (const auto& o : s.outputs) {
        if (!fs::exists(at(o))) throw Error(Errc::io, "expected output " + o + " was not produced");
        rec.outputs[o] = sha256_path(at(o));
      }
      manifest_.append(rec);
      summary_.executed.push_back(s.name);
    } catch (const Error& e) {
      throw Error(e.code(), "stage " + s.name + ": " + strip_category(e));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::format, "stage " + s.name + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(Errc::io, "stage " + s.name + ": " + e.what());
    }
  }

 private:
  bool outputs_match(const Stage& s, const StageRecord& prev) const {
    for (const auto& o : s.outputs) {
      const auto it = prev.outputs.find(o);
      if (it == prev.outputs.end() || !fs::exists(at(o)) || sha256_path(at(o)) != it->second) return false;
    }
    return true;
  }

  fs::path out_;
  StageManifest manifest_;
  RunSummary summary_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot open " + path.string());
  return json::parse(f);
}

std::vector<std::uint8_t> mask_bytes(const Raster& mask, const Raster& like, const fs::path& path) {
  if (mask.bands() != 1 || mask.width() != like.width() || mask.height() != like.height()) {
    throw Error(Errc::dimension, "cloud mask " + path.string() + " does not match the image grid");
  }
  std::vector<std::uint8_t> out(mask.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = mask.valid(p) && mask.samples()[p] != 0.0f ? 1 : 0;
  return out;
}

std::string tile_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu.mbt", prefix, i);
  return buf;
}

json record_json(const TileRecord& r) {
  return {{"index", r.index}, {"x", r.x_offset}, {"y", r.y_offset}, {"valid_fraction", r.valid_fraction}};
}

std::vector<TileRecord> read_index(const fs::path& dir) {
  std::vector<TileRecord> out;
  const json doc = read_json(dir / "index.json");
  for (const auto& j : doc.at("tiles")) {
    out.push_back({j.at("index").get<std::size_t>(), j.at("x").get<std::size_t>(), j.at("y").get<std::size_t>(),
                   j.at("valid_fraction").get<double>()});
  }
  return out;
}

std::vector<Raster> read_tiles(const fs::path& dir, const char* prefix, std::size_t n) {
  std::vector<Raster> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(raster_read(dir / tile_name(prefix, i)));
  return out;
}

std::vector<seg::SegSample> read_samples(const fs::path& manifest) {
  std::vector<seg::SegSample> out;
  for (const auto& r : read_manifest(manifest)) {
    out.push_back({raster_read(resolve(manifest, r.image_path)), raster_read(resolve(manifest, r.label_path))});
  }
  return out;
}

Raster to_index_space(const Raster& general, std::size_t k) {
  Raster out = general;
  auto s = out.samples();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    if (!labelled_pixel(general, p)) {
      s[p] = kLabelNodata;
      continue;
    }
    const int code = static_cast<int>(s[p]);
    if (code < 1 || static_cast<std::size_t>(code) > k) {
      throw Error(Errc::range, "label code " + std::to_string(code) + " at pixel " + std::to_string(p) +
                                   " is outside the " + std::to_string(k) + " trained classes");
    }
    s[p] = static_cast<float>(labels::class_index(static_cast<std::uint8_t>(code)));
  }
  return out;
}

json distribution_json(const labels::ClassDistribution& d, const labels::LabelScheme& scheme) {
  json j = json::object();
  for (const auto& [code, frac] : d.fractions) j[scheme.name_of(code)] = eval::round_to(100.0 * frac, 2);
  return j;
}

}  // namespace

RunSummary run(const PipelineConfig& cfg) {
  cfg.validate();
  tune_allocator();
  fs::create_directories(cfg.output_dir);
  Runner r(cfg.output_dir);
  const auto& schemes = labels::builtin_schemes();
  const std::size_t k = cfg.seg_train.num_classes;

  // shift: nodata masking, then value shifting.
  {
    Stage s("shift");
    for (const auto* d : {&cfg.source, &cfg.target}) {
      const std::string tag = d == &cfg.source ? "source" : "target";
      s.inputs.push_back({tag + ".image", d->image});
      if (d->cloud_mask) s.inputs.push_back({tag + ".cloud_mask", *d->cloud_mask});
      s.params[tag] = {{"offsets", d->offsets ? json(*d->offsets) : json(nullptr)}, {"percentile", d->percentile}};
      s.outputs.push_back("prep/" + tag + "_image.mbt");
    }
    s.outputs.push_back("prep/offsets.json");
    r.stage(s, [&] {
      fs::create_directories(r.at("prep"));
      json offsets_doc;
      for (const auto* d : {&cfg.source, &cfg.target}) {
        const std::string tag = d == &cfg.source ? "source" : "target";
        Raster img = raster_read(d->image);
        if (d->cloud_mask) img = set_nodata_mask(img, mask_bytes(raster_read(*d->cloud_mask), img, *d->cloud_mask));
        const auto offsets = d->offsets ? *d->offsets : estimate_shift_offsets(band_stats(img, 4096), d->percentile);
        raster_write(shift_values(img, offsets), r.at("prep/" + tag + "_image.mbt"));
        offsets_doc[tag] = offsets;
        spdlog::info("shift {}: offsets {}", tag, json(offsets).dump());
      }
      write_json(r.at("prep/offsets.json"), offsets_doc);
    });
  }

  // tile
  {
    Stage s("tile");
    s.inputs = {{"prep/source_image.mbt", r.at("prep/source_image.mbt")},
                {"prep/target_image.mbt", r.at("prep/target_image.mbt")},
                {"source.labels", cfg.source.labels},
                {"target.labels", cfg.target.labels}};
    s.params = {{"tile_size", cfg.tiling.tile_size},
                {"stride", cfg.tiling.stride},
                {"min_valid_fraction", cfg.tiling.min_valid_fraction}};
    s.outputs = {"tiles/source", "tiles/target"};
    r.stage(s, [&] {
      for (const auto* d : {&cfg.source, &cfg.target}) {
        const std::string tag = d == &cfg.source ? "source" : "target";
        const fs::path dir = r.at("tiles/" + tag);
        fs::create_directories(dir);
        const auto tiles = tile_dataset(raster_read(r.at("prep/" + tag + "_image.mbt")), raster_read(d->labels), cfg.tiling);
        if (tiles.empty()) throw Error(Errc::empty_input, tag + " scene produced no tiles");
        json index = json::array();
        for (std::size_t i = 0; i < tiles.size(); ++i) {
          raster_write(tiles[i].image, dir / tile_name("img", i));
          raster_write(tiles[i].labels, dir / tile_name("lbl", i));
          index.push_back(record_json(tiles[i].record));
        }
        write_json(dir / "index.json", {{"count", tiles.size()}, {"tiles", index}});
        spdlog::info("tile {}: {} tiles", tag, tiles.size());
      }
    });
  }

  // recode: label tiles and scenes to GENERAL-8.
  {
    Stage s("recode");
    s.inputs = {{"tiles/source", r.at("tiles/source")},
                {"tiles/target", r.at("tiles/target")},
                {"source.labels", cfg.source.labels},
                {"target.labels", cfg.target.labels}};
    s.params = {{"source", cfg.source.scheme}, {"target", cfg.target.scheme}};
    s.outputs = {"labels", "source.jsonl", "target.jsonl"};
    r.stage(s, [&] {
      for (const auto* d : {&cfg.source, &cfg.target}) {
        const std::string tag = d == &cfg.source ? "source" : "target";
        const auto map = schemes.to_general(d->scheme);
        const fs::path dir = r.at("labels/" + tag);
        fs::create_directories(dir);
        raster_write(labels::recode(raster_read(d->labels), map), r.at("labels/" + tag + "_scene.mbt"));
        const auto index = read_index(r.at("tiles/" + tag));
        std::vector<SampleRecord> records;
        for (std::size_t i = 0; i < index.size(); ++i) {
          raster_write(labels::recode(raster_read(r.at("tiles/" + tag) / tile_name("lbl", i)), map),
                       dir / tile_name("lbl", i));
          records.push_back({"tiles/" + tag + "/" + tile_name("img", i), "labels/" + tag + "/" + tile_name("lbl", i),
                             "original"});
        }
        write_manifest(r.at(tag + ".jsonl"), records);
      }
    });
  }

  const std::size_t n_source = read_index(r.at("tiles/source")).size();
  const auto target_index = read_index(r.at("tiles/target"));

  // style statistics of both domains
  {
    Stage s("style-stats");
    s.inputs = {{"tiles/source", r.at("tiles/source")}, {"tiles/target", r.at("tiles/target")}};
    s.outputs = {"style/styles.json"};
    r.stage(s, [&] {
      fs::create_directories(r.at("style"));
      const auto src = style::extract_domain_style(read_tiles(r.at("tiles/source"), "img", n_source));
      const auto tgt = style::extract_domain_style(read_tiles(r.at("tiles/target"), "img", target_index.size()));
      write_json(r.at("style/styles.json"), {{"source", src.to_json()}, {"target", tgt.to_json()}});
    });
  }
  const json styles = read_json(r.at("style/styles.json"));
  const auto source_style = style::DomainStyle::from_json(styles.at("source"));
  const auto target_style = style::DomainStyle::from_json(styles.at("target"));

  json style_summary = json::object();
  if (cfg.style_mode == style::StyleMode::gan) {
    Stage s("train-style");
    s.inputs = {{"tiles/source", r.at("tiles/source")},
                {"tiles/target", r.at("tiles/target")},
                {"style/styles.json", r.at("style/styles.json")}};
    s.params = cfg.style_train.to_json();
    s.seed = cfg.style_train.seed;
    for (const char* c : style::kStyleCheckpoints) s.outputs.push_back(std::string("style/") + c);
    s.outputs.push_back("style/style_log.csv");
    s.outputs.push_back("style/summary.json");
    r.stage(s, [&] {
      const auto models = style::train_style(read_tiles(r.at("tiles/source"), "img", n_source),
                                             read_tiles(r.at("tiles/target"), "img", target_index.size()),
                                             source_style, target_style, cfg.style_train, r.at("style"));
      write_json(r.at("style/summary.json"), {{"steps", cfg.style_train.steps},
                                              {"tail_accuracy", eval::round_to(models.tail_accuracy(), 4)}});
    });
    style_summary = read_json(r.at("style/summary.json"));
  }

  // stylize
  {
    Stage s("stylize");
    s.inputs = {{"tiles/source", r.at("tiles/source")}, {"style/styles.json", r.at("style/styles.json")}};
    if (cfg.style_mode == style::StyleMode::gan) s.inputs.push_back({"style/g_st.ckpt", r.at("style/g_st.ckpt")});
    s.params = {{"mode", style::style_mode_name(cfg.style_mode)}};
    s.outputs = {"stylized"};
    r.stage(s, [&] {
      style::StylizeInputs in{cfg.style_mode, source_style, target_style, std::nullopt};
      if (cfg.style_mode == style::StyleMode::gan) in.generator_checkpoint = r.at("style/g_st.ckpt");
      const auto out = style::stylize_dataset(read_tiles(r.at("tiles/source"), "img", n_source), in);
      fs::create_directories(r.at("stylized"));
      for (std::size_t i = 0; i < out.size(); ++i) raster_write(out[i], r.at("stylized") / tile_name("img", i));
    });
  }

  // mix
  {
    Stage s("mix");
    s.inputs = {{"source.jsonl", r.at("source.jsonl")}, {"stylized", r.at("stylized")}};
    s.outputs = {"mixed.jsonl"};
    r.stage(s, [&] {
      const auto originals = read_manifest(r.at("source.jsonl"));
      std::vector<std::string> stylized;
      for (std::size_t i = 0; i < originals.size(); ++i) stylized.push_back("stylized/" + tile_name("img", i));
      const auto mixed = build_mixed_dataset(originals, stylized);
      validate_mixed_dataset(mixed);
      write_manifest(r.at("mixed.jsonl"), mixed);
    });
  }

  // joint band means over the source originals and the target tiles
  {
    Stage s("means");
    s.inputs = {{"tiles/source", r.at("tiles/source")}, {"tiles/target", r.at("tiles/target")}};
    s.outputs = {"means.json"};
    r.stage(s, [&] {
      auto tiles = read_tiles(r.at("tiles/source"), "img", n_source);
      auto tgt = read_tiles(r.at("tiles/target"), "img", target_index.size());
      std::move(tgt.begin(), tgt.end(), std::back_inserter(tiles));
      write_json(r.at("means.json"), {{"means", seg::compute_band_means(tiles)}});
    });
  }
  const seg::BandMeans means = read_json(r.at("means.json")).at("means").get<seg::BandMeans>();

  const auto train = [&](const char* name, const char* manifest, const char* ckpt, const char* log) {
    Stage s(name);
    s.inputs = {{manifest, r.at(manifest)},
                {"tiles/source", r.at("tiles/source")},
                {"labels", r.at("labels")},
                {"means.json", r.at("means.json")}};
    if (std::string(manifest) == "mixed.jsonl") s.inputs.push_back({"stylized", r.at("stylized")});
    s.params = cfg.seg_train.to_json();
    s.seed = cfg.seg_train.seed;
    s.outputs = {ckpt, log};
    r.stage(s, [&] {
      const auto samples = read_samples(r.at(manifest));
      const auto result = seg::train_seg(samples, cfg.seg_train, means, r.at(std::string(ckpt) + ".diag"));
      nn::save_checkpoint(r.at(ckpt), result.params,
                          {{"manifest", manifest}, {"config", cfg.seg_train.to_json()}, {"means", means}});
      seg::write_seg_log(r.at(log), result.log);
    });
  };
  train("train-seg-baseline", "source.jsonl", kBaselineCheckpoint, "baseline_log.csv");
  train("train-seg-adapted", "mixed.jsonl", kAdaptedCheckpoint, "adapted_log.csv");

  // infer: per-tile predictions mosaicked onto the target grid as GENERAL-8 codes.
  {
    Stage s("infer");
    s.inputs = {{kBaselineCheckpoint, r.at(kBaselineCheckpoint)},
                {kAdaptedCheckpoint, r.at(kAdaptedCheckpoint)},
                {"tiles/target", r.at("tiles/target")},
                {"means.json", r.at("means.json")},
                {"prep/target_image.mbt", r.at("prep/target_image.mbt")}};
    s.outputs = {"pred/baseline.mbt", "pred/adapted.mbt"};
    r.stage(s, [&] {
      fs::create_directories(r.at("pred"));
      const auto tiles = read_tiles(r.at("tiles/target"), "img", target_index.size());
      const Raster scene = raster_read(r.at("prep/target_image.mbt"));
      for (const char* which : {"baseline", "adapted"}) {
        const auto ckpt = nn::load_checkpoint(r.at(std::string(which) + ".ckpt"));
        const auto preds = seg::infer(ckpt.params, tiles, means);
        Raster mosaic(scene.width(), scene.height(), 1, DType::U8, scene.geotransform());
        std::fill(mosaic.samples().begin(), mosaic.samples().end(), static_cast<float>(kLabelNodata));
        for (std::size_t i = 0; i < preds.size(); ++i) {
          const auto& rec = target_index[i];
          const Raster& p = preds[i];
          for (std::size_t y = 0; y < p.height(); ++y) {
            for (std::size_t x = 0; x < p.width(); ++x) {
              const float v = p.at(0, x, y);
              mosaic.at(0, rec.x_offset + x, rec.y_offset + y) =
                  v == kLabelNodata ? static_cast<float>(kLabelNodata)
                                    : static_cast<float>(labels::general_code(static_cast<std::uint8_t>(v)));
            }
          }
        }
        raster_write(mosaic, r.at(std::string("pred/") + which + ".mbt"));
      }
    });
  }

  // eval
  {
    Stage s("eval");
    s.inputs = {{"labels", r.at("labels")}, {"pred/baseline.mbt", r.at("pred/baseline.mbt")},
                {"pred/adapted.mbt", r.at("pred/adapted.mbt")}};
    if (cfg.style_mode == style::StyleMode::gan) s.inputs.push_back({"style/summary.json", r.at("style/summary.json")});
    s.params = {{"classes", k}, {"points", cfg.eval_points}, {"mode", style::style_mode_name(cfg.style_mode)}};
    s.seed = cfg.eval_seed;
    s.outputs = {kReportFile, "pred/baseline.ppm", "pred/adapted.ppm", "pred/reference.ppm"};
    r.stage(s, [&] {
      const Raster ref_general = raster_read(r.at("labels/target_scene.mbt"));
      const Raster base_general = raster_read(r.at("pred/baseline.mbt"));
      const Raster adapt_general = raster_read(r.at("pred/adapted.mbt"));
      const Raster ref = to_index_space(ref_general, k);
      const Raster base = to_index_space(base_general, k);
      const Raster adapt = to_index_space(adapt_general, k);

      eval::ReportInputs in;
      in.baseline = eval::iou_from_confusion(eval::confusion(ref, base, k));
      in.adapted = eval::iou_from_confusion(eval::confusion(ref, adapt, k));
      for (std::size_t c = 0; c < k; ++c) {
        in.class_names.push_back(schemes.general.name_of(labels::general_code(static_cast<std::uint8_t>(c))));
      }
      in.points = eval::random_point_validation(ref, adapt, cfg.eval_points, cfg.eval_seed);
      in.baseline_points = eval::random_point_validation(ref, base, cfg.eval_points, cfg.eval_seed);
      in.distributions = {
          {"source", distribution_json(labels::class_distribution(raster_read(r.at("labels/source_scene.mbt")),
                                                                  schemes.general),
                                       schemes.general)},
          {"target", distribution_json(labels::class_distribution(ref_general, schemes.general), schemes.general)}};
      in.extra = {{"style_mode", style::style_mode_name(cfg.style_mode)},
                  {"num_classes", k},
                  {"tiles", {{"source", n_source}, {"target", target_index.size()}}},
                  {"seed", cfg.seed}};
      if (!style_summary.empty()) in.extra["style"] = style_summary;
      eval::write_report(in, r.at(kReportFile));
      eval::render_labelmap(base_general, schemes.general, r.at("pred/baseline.ppm"));
      eval::render_labelmap(adapt_general, schemes.general, r.at("pred/adapted.ppm"));
      eval::render_labelmap(ref_general, schemes.general, r.at("pred/reference.ppm"));
      spdlog::info("eval: baseline mIoU {:.2f}, adapted mIoU {:.2f}", in.baseline.miou, in.adapted.miou);
    });
  }

  r.summary().report = r.at(kReportFile);
  return r.summary();
}

}  // namespace crossda::pipeline
