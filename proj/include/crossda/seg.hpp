#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "crossda/nn/ops.hpp"
#include "crossda/nn/params.hpp"
#include "crossda/raster.hpp"
#include "json.hpp"

namespace crossda::seg {

/// Per-band mean over every valid pixel of the listed tiles, in [-1, 1].
using BandMeans = std::vector<double>;

BandMeans compute_band_means(std::span<const Raster> tiles);

/// Band b minus means[b]; F32 in and out, mask untouched.
Raster normalize(const Raster& tile, const BandMeans& means);

/// The eight rotations/flips: t = rotation quarter turns (t % 4) with a
/// horizontal flip first when t >= 4.
inline constexpr int kTransforms = 8;
Raster transform_raster(const Raster& r, int t);

/// Draws one transform uniformly and applies it to both tiles.
std::pair<Raster, Raster> augment(const Raster& image, const Raster& labels, std::mt19937_64& rng);

/// Encoder of four stride-2 conv blocks (6-32-64-128-256, ReLU), decoder of
/// four upsample+conv blocks (256-128-64-32-K) with additive encoder skips,
/// and a 1x1 conv of the input added to the logits.
nn::ParameterSet make_segmenter(std::size_t classes, std::uint64_t seed);
std::size_t segmenter_classes(const nn::ParameterSet& params);

/// Logits [N, K, H, W] for input [N, 6, H, W]; H and W multiples of 16.
template <typename T>
nn::Var segmenter_forward(nn::BasicTape<T>& tape, std::span<const nn::Var> p, nn::Var x);

struct SegTrainConfig {
  std::size_t batch = 8;
  std::int64_t steps = 2000;
  double base_lr = 1e-4;
  double weight_decay = 5e-4;
  double power = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  bool augment = true;
  std::uint64_t seed = 17;
  std::size_t num_classes = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static SegTrainConfig from_json(const nlohmann::json& j);
};

/// Image tile (U16 or F32) with its label tile of GENERAL-8 codes.
struct SegSample {
  Raster image;
  Raster labels;
};

struct SegLogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct SegTrainResult {
  nn::ParameterSet params;
  std::vector<SegLogRow> log;
};

/// Network input and loss targets for a batch: normalized images with
/// invalid pixels zeroed, and class indices with 255 wherever the image or
/// label is not usable.
nn::Tensor prepare_images(std::span<const Raster* const> images, const BandMeans& means);
std::vector<std::uint8_t> prepare_targets(std::span<const Raster* const> images,
                                          std::span<const Raster* const> labels, std::size_t classes);

/// Adam with the polynomial schedule. A non-finite loss writes
/// `diag_checkpoint` (when given) and throws Error(non_finite).
SegTrainResult train_seg(std::span<const SegSample> samples, const SegTrainConfig& config, const BandMeans& means,
                         const std::optional<std::filesystem::path>& diag_checkpoint = {});

void write_seg_log(const std::filesystem::path& path, std::span<const SegLogRow> log);

/// Label tiles of class indices in [0, K), 255 where the input is invalid.
/// Batches of `batch` tiles; the result does not depend on it.
std::vector<Raster> infer(const nn::ParameterSet& params, std::span<const Raster> tiles, const BandMeans& means,
                          std::size_t batch = 8);

}  // namespace crossda::seg
