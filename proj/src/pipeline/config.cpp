#include <fstream>

#include "crossda/error.hpp"
#include "crossda/labels.hpp"
#include "crossda/pipeline.hpp"

namespace crossda::pipeline {

namespace fs = std::filesystem;

namespace {

fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

DomainInput parse_domain(const nlohmann::json& j, const fs::path& base, const char* which) {
  if (!j.is_object()) throw Error(Errc::validation, std::string("config: '") + which + "' must be an object");
  DomainInput d;
  if (!j.contains("image") || !j.contains("labels")) {
    throw Error(Errc::validation, std::string("config: '") + which + "' needs 'image' and 'labels'");
  }
  d.image = resolve_path(base, j.at("image").get<std::string>());
  d.labels = resolve_path(base, j.at("labels").get<std::string>());
  if (j.contains("cloud_mask") && !j.at("cloud_mask").is_null()) {
    d.cloud_mask = resolve_path(base, j.at("cloud_mask").get<std::string>());
  }
  d.scheme = j.value("scheme", d.scheme);
  if (j.contains("offsets") && !j.at("offsets").is_null()) d.offsets = j.at("offsets").get<std::vector<std::int64_t>>();
  d.percentile = j.value("percentile", d.percentile);
  return d;
}

nlohmann::json domain_json(const DomainInput& d) {
  nlohmann::json j = {{"image", d.image.string()}, {"labels", d.labels.string()}, {"scheme", d.scheme},
                      {"percentile", d.percentile}};
  j["cloud_mask"] = d.cloud_mask ? nlohmann::json(d.cloud_mask->string()) : nlohmann::json(nullptr);
  j["offsets"] = d.offsets ? nlohmann::json(*d.offsets) : nlohmann::json(nullptr);
  return j;
}

void validate_domain(const DomainInput& d, const char* which) {
  const auto need = [&](const fs::path& p, const char* field) {
    if (!fs::is_regular_file(p)) {
      throw Error(Errc::validation, std::string("config: ") + which + "." + field + " does not exist: " + p.string());
    }
  };
  need(d.image, "image");
  need(d.labels, "labels");
  if (d.cloud_mask) need(*d.cloud_mask, "cloud_mask");
  try {
    (void)labels::builtin_schemes().to_general(d.scheme);
  } catch (const Error&) {
    throw Error(Errc::validation, std::string("config: ") + which + ".scheme '" + d.scheme + "' is not a known scheme");
  }
  if (d.offsets) {
    if (d.offsets->size() != style::kBands) {
      throw Error(Errc::validation, std::string("config: ") + which + ".offsets needs 6 entries");
    }
    for (auto o : *d.offsets) {
      if (o < 0 || o > 65535) throw Error(Errc::validation, std::string("config: ") + which + ".offsets outside [0, 65535]");
    }
  } else if (!(d.percentile >= 0.0 && d.percentile < 1.0)) {
    throw Error(Errc::validation, std::string("config: ") + which + ".percentile must lie in [0, 1)");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (version != 1) throw Error(Errc::validation, "config: unsupported version " + std::to_string(version));
  if (output_dir.empty()) throw Error(Errc::validation, "config: output_dir is empty");
  validate_domain(source, "source");
  validate_domain(target, "target");
  try {
    tiling.validate();
    style_train.validate();
    seg_train.validate();
  } catch (const Error& e) {
    if (e.code() == Errc::validation) throw;
    throw Error(Errc::validation, std::string("config: ") + e.what());
  }
  if (tiling.tile_size % 16 != 0) throw Error(Errc::validation, "config: tile_size must be a multiple of 16");
  if (eval_points < 1) throw Error(Errc::validation, "config: evaluation.points must be >= 1");
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"version", version},
          {"output_dir", output_dir.string()},
          {"seed", seed},
          {"source", domain_json(source)},
          {"target", domain_json(target)},
          {"tiling",
           {{"tile_size", tiling.tile_size}, {"stride", tiling.stride}, {"min_valid_fraction", tiling.min_valid_fraction}}},
          {"style", {{"mode", style::style_mode_name(style_mode)}, {"train", style_train.to_json()}}},
          {"segmentation", seg_train.to_json()},
          {"evaluation", {{"seed", eval_seed}, {"points", eval_points}}}};
}

PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(Errc::validation, "config: top level must be an object");
  try {
    PipelineConfig c;
    c.base_dir = base_dir;
    c.version = j.value("version", 0);
    c.output_dir = resolve_path(base_dir, j.value("output_dir", std::string("out")));
    c.seed = j.value("seed", c.seed);
    if (!j.contains("source") || !j.contains("target")) throw Error(Errc::validation, "config: needs 'source' and 'target'");
    c.source = parse_domain(j.at("source"), base_dir, "source");
    c.target = parse_domain(j.at("target"), base_dir, "target");

    const auto t = j.value("tiling", nlohmann::json::object());
    c.tiling.tile_size = t.value("tile_size", c.tiling.tile_size);
    c.tiling.stride = t.value("stride", c.tiling.tile_size);
    c.tiling.min_valid_fraction = t.value("min_valid_fraction", c.tiling.min_valid_fraction);

    const auto st = j.value("style", nlohmann::json::object());
    c.style_mode = style::parse_style_mode(st.value("mode", std::string("stats")));
    auto stj = st.value("train", nlohmann::json::object());
    if (!stj.contains("seed")) stj["seed"] = c.seed;
    c.style_train = style::StyleTrainConfig::from_json(stj);

    auto sj = j.value("segmentation", nlohmann::json::object());
    if (!sj.contains("seed")) sj["seed"] = c.seed;
    c.seg_train = seg::SegTrainConfig::from_json(sj);

    const auto ej = j.value("evaluation", nlohmann::json::object());
    c.eval_seed = ej.value("seed", c.seed);
    c.eval_points = ej.value("points", c.eval_points);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::validation, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::validation) throw;
    throw Error(Errc::validation, std::string("config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::validation, "config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::validation, "config " + path.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

}  // namespace crossda::pipeline
