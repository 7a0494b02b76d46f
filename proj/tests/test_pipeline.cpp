#include <fstream>
#include <map>
#include <set>

#include "crossda/pipeline.hpp"
#include "test_util.hpp"

using namespace crossda;
using namespace crossda::pipeline;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.tiles_per_domain = 6;
  s.tile_size = 32;
  return s;
}

std::map<int, double> label_fractions(const Raster& labels) {
  std::map<int, double> f;
  double n = 0.0;
  for (float v : labels.samples()) {
    if (v == kLabelNodata) continue;
    f[static_cast<int>(v)] += 1.0;
    n += 1.0;
  }
  for (auto& [k, v] : f) v /= n;
  return f;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("sha256") {
  const std::string abc = "abc";
  const std::vector<std::uint8_t> bytes(abc.begin(), abc.end());
  CHECK(sha256_hex(bytes) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

  const auto dir = testutil::temp_dir("sha");
  std::ofstream(dir / "x.txt") << "abc";
  CHECK(sha256_file(dir / "x.txt") == sha256_hex(bytes));
  const auto before = sha256_path(dir);
  std::ofstream(dir / "y.txt") << "d";
  CHECK(sha256_path(dir) != before);
}

TEST_CASE("stage manifest") {
  const auto dir = testutil::temp_dir("stage_manifest");
  {
    StageManifest m(dir / "m.jsonl");
    CHECK(m.records().empty());
    m.append({"tile", "k1", {{"a", "h1"}}, {{"b", "h2"}}, 3});
    m.append({"tile", "k1", {{"a", "h1"}}, {{"b", "h3"}}, 3});
  }
  const StageManifest m(dir / "m.jsonl");
  REQUIRE(m.records().size() == 2);
  REQUIRE(m.find("tile", "k1") != nullptr);
  CHECK(m.find("tile", "k1")->outputs.at("b") == "h3");
  CHECK(m.find("tile", "k2") == nullptr);
}

TEST_CASE("synthetic benchmark is deterministic") {
  const auto a = synth_benchmark(small_spec());
  const auto b = synth_benchmark(small_spec());
  CHECK(a.source.image == b.source.image);
  CHECK(a.target.image == b.target.image);
  CHECK(a.target.labels == b.target.labels);
  CHECK(a.source.cloud_mask == b.source.cloud_mask);
  CHECK(a.spec.gain == b.spec.gain);
  REQUIRE(a.spec.gain.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.spec.gain[i] >= 0.6);
    CHECK(a.spec.gain[i] <= 1.4);
    CHECK(std::abs(a.spec.bias[i]) <= 0.1);
  }
  auto other = small_spec();
  other.seed = 18;
  CHECK_FALSE(synth_benchmark(other).target.image == a.target.image);

  const auto d1 = testutil::temp_dir("synth_a"), d2 = testutil::temp_dir("synth_b");
  write_synth(a, d1);
  write_synth(b, d2);
  CHECK(sha256_path(d1) == sha256_path(d2));
  CHECK(std::filesystem::exists(d1 / "config.json"));
}

TEST_CASE("identity transform gives matching class values") {
  auto s = small_spec();
  s.gain.assign(6, 1.0);
  s.bias.assign(6, 0.0);
  s.noise_std = 0.0;
  s.clouds_per_tile = 0.0;
  const auto d = synth_benchmark(s);
  for (const SynthScene* scene : {&d.source, &d.target}) {
    for (std::size_t p = 0; p < scene->image.pixel_count(); ++p) CHECK(scene->cloud_mask.samples()[p] == 0.0f);
  }
  std::map<int, std::set<std::vector<float>>> src, tgt;
  const auto collect = [](const SynthScene& sc, double offset, std::map<int, std::set<std::vector<float>>>& out) {
    for (std::size_t p = 0; p < sc.image.pixel_count(); ++p) {
      std::vector<float> v;
      for (std::size_t b = 0; b < 6; ++b) v.push_back(sc.image.band(b)[p] - static_cast<float>(offset));
      out[static_cast<int>(sc.labels.samples()[p])].insert(v);
    }
  };
  collect(d.source, s.source_offset, src);
  collect(d.target, 0.0, tgt);
  CHECK(src == tgt);
  for (const auto& [k, v] : tgt) CHECK(v.size() == 1);
}

TEST_CASE("label mixture follows the spec") {
  SynthSpec s;
  s.tiles_per_domain = 100;
  s.mixture = {0.4, 0.3, 0.2, 0.1};
  const auto d = synth_benchmark(s);
  for (const SynthScene* scene : {&d.source, &d.target}) {
    const auto f = label_fractions(scene->labels);
    for (int c = 1; c <= 4; ++c) CHECK(std::abs(f.at(c) - s.mixture[c - 1]) <= 0.02);
  }
}

TEST_CASE("synth validation") {
  auto s = small_spec();
  s.classes = 9;
  CHECK_ERRC(synth_benchmark(s), Errc::validation);
  s = small_spec();
  s.gain.assign(6, -1.0);
  CHECK_ERRC(synth_benchmark(s), Errc::validation);
  s = small_spec();
  s.noise_std = -0.1;
  CHECK_ERRC(synth_benchmark(s), Errc::validation);
  const auto j = small_spec().to_json();
  CHECK(SynthSpec::from_json(j).to_json() == j);
}

TEST_CASE("config validation") {
  const auto dir = testutil::temp_dir("config");
  write_synth(synth_benchmark(small_spec()), dir);
  const auto cfg = load_config(dir / "config.json");
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.source.offsets.has_value());
  CHECK(cfg.source.image.is_absolute());
  CHECK(cfg.seg_train.num_classes == 4);

  std::ifstream f(dir / "config.json");
  auto j = nlohmann::json::parse(f);
  auto missing = j;
  missing["target"]["image"] = "nope.mbt";
  CHECK_ERRC(parse_config(missing, dir).validate(), Errc::validation);
  auto version = j;
  version["version"] = 2;
  CHECK_ERRC(parse_config(version, dir).validate(), Errc::validation);
  auto tile = j;
  tile["tiling"]["tile_size"] = 30;
  CHECK_ERRC(parse_config(tile, dir).validate(), Errc::validation);
  CHECK_ERRC(load_config(dir / "absent.json"), Errc::validation);
}

TEST_CASE("pipeline run resumes without work") {
  const auto dir = testutil::temp_dir("run");
  write_synth(synth_benchmark(small_spec()), dir);
  auto cfg = load_config(dir / "config.json");
  cfg.seg_train.steps = 3;
  cfg.eval_points = 20;
  const auto first = run(cfg);
  CHECK(first.skipped.empty());
  CHECK(std::filesystem::exists(cfg.output_dir / kReportFile));
  CHECK(std::filesystem::exists(cfg.output_dir / kBaselineCheckpoint));
  CHECK(std::filesystem::exists(cfg.output_dir / kAdaptedCheckpoint));
  const StageManifest m(cfg.output_dir / kStageManifest);
  CHECK(m.records().size() == first.executed.size());
  for (const auto& r : m.records()) CHECK_FALSE(r.outputs.empty());

  const auto second = run(cfg);
  CHECK(second.executed.empty());
  CHECK(second.skipped == first.executed);

  std::ifstream f(cfg.output_dir / kReportFile);
  const auto report = nlohmann::json::parse(f);
  CHECK(report.contains("baseline"));
  CHECK(report.contains("adapted"));
  CHECK(report.at("baseline").at("per_class").size() == 4);
}

}  // TEST_SUITE
