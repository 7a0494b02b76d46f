#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossda/raster.hpp"
#include "crossda/seg.hpp"
#include "crossda/style.hpp"
#include "json.hpp"

namespace crossda::pipeline {

// --- synthetic benchmark ---------------------------------------------------

using Signature = std::array<double, 6>;

struct SynthSpec {
  std::uint64_t seed = 17;
  std::size_t tiles_per_domain = 200;
  std::size_t tile_size = 64;
  std::size_t classes = 4;
  /// Per-class band values in [-1, 1] space; defaults when empty.
  std::vector<Signature> signatures;
  /// Per-class area fractions; uniform when empty.
  std::vector<double> mixture;
  /// Target transform per band; drawn from the seed when empty, gain in
  /// [0.6, 1.4] and bias in [-0.1, 0.1].
  std::vector<double> gain;
  std::vector<double> bias;
  std::size_t blur_radius = 0;
  double noise_std = 0.02;
  /// Source pixels are this many target pixels wide.
  double resolution_ratio = 1.5;
  /// Raw count added to every source sample, removed again by the shift
  /// stage.
  std::uint16_t source_offset = 5000;
  /// Mean region width in pixels.
  std::size_t region_size = 20;
  /// Expected cloud discs per tile.
  double clouds_per_tile = 0.3;

  /// Fills defaults that depend on the seed or class count.
  SynthSpec resolved() const;
  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthScene {
  Raster image;        // U16, 6 bands
  Raster labels;       // U8, GENERAL-8 codes
  Raster cloud_mask;   // U8, 1 = cloud
};

struct SynthDataset {
  SynthSpec spec;  // resolved
  SynthScene source;
  SynthScene target;
};

SynthDataset synth_benchmark(const SynthSpec& spec);

/// Writes the scenes, spec.json and a pipeline config.json under `dir`.
void write_synth(const SynthDataset& data, const std::filesystem::path& dir);

// --- configuration ---------------------------------------------------------

struct DomainInput {
  std::filesystem::path image;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> cloud_mask;
  std::string scheme = "GENERAL-8";
  std::optional<std::vector<std::int64_t>> offsets;
  double percentile = 0.005;
};

struct PipelineConfig {
  int version = 1;
  std::filesystem::path base_dir;  // directory of the config file
  std::filesystem::path output_dir;
  std::uint64_t seed = 17;
  DomainInput source;
  DomainInput target;
  TileSpec tiling = TileSpec::square(64);
  style::StyleMode style_mode = style::StyleMode::stats;
  style::StyleTrainConfig style_train;
  seg::SegTrainConfig seg_train;
  std::size_t eval_points = 100;
  std::uint64_t eval_seed = 17;

  /// Ranges and path existence; throws Error(validation).
  void validate() const;
  nlohmann::json to_json() const;
};

/// Relative paths resolve against the config file's directory.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

// --- stage manifest --------------------------------------------------------

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Files hash by content; directories hash their sorted relative names and
/// file hashes.
std::string sha256_path(const std::filesystem::path& path);

struct StageRecord {
  std::string stage;
  std::string key;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static StageRecord from_json(const nlohmann::json& j);
};

class StageManifest {
 public:
  explicit StageManifest(std::filesystem::path path);

  const std::vector<StageRecord>& records() const noexcept { return records_; }
  /// Latest record for `stage` carrying `key`.
  const StageRecord* find(const std::string& stage, const std::string& key) const;
  void append(const StageRecord& r);

 private:
  std::filesystem::path path_;
  std::vector<StageRecord> records_;
};

struct RunSummary {
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
  std::filesystem::path report;
};

/// Executes every stage in order; finished stages whose inputs are
/// unchanged are skipped.
RunSummary run(const PipelineConfig& config);

/// Fixed names under the output directory.
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kBaselineCheckpoint = "baseline.ckpt";
inline constexpr const char* kAdaptedCheckpoint = "adapted.ckpt";
inline constexpr const char* kStageManifest = "manifest.jsonl";

/// Large-block allocator settings for the training loops.
void tune_allocator();

}  // namespace crossda::pipeline
