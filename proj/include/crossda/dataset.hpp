#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crossda/nn/tensor.hpp"
#include "crossda/raster.hpp"

namespace crossda {

/// One line of a dataset manifest. Paths are relative to the manifest's
/// directory unless absolute.
struct SampleRecord {
  std::string image_path;
  std::string label_path;
  std::string origin = "original";  // "original" | "stylized"

  bool operator==(const SampleRecord&) const = default;
};

std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records);

/// Resolves a record path against the manifest directory.
std::filesystem::path resolve(const std::filesystem::path& manifest, const std::string& p);

/// Originals followed by their stylized versions; stylized i shares the
/// label path of original i.
std::vector<SampleRecord> build_mixed_dataset(std::span<const SampleRecord> originals,
                                              std::span<const std::string> stylized_images);

/// Every stylized entry must pair with exactly one original that has the
/// same label path, in matching order. Throws Error(validation).
void validate_mixed_dataset(std::span<const SampleRecord> records);

/// F32 tile in [-1, 1]: U16 input is rescaled, F32 input is copied.
Raster unit_tile(const Raster& r);

/// Stacks equally sized tiles into [N, bands, H, W].
nn::Tensor stack_tiles(std::span<const Raster* const> tiles);
nn::Tensor stack_tiles(std::span<const Raster> tiles);

/// Copies sample n of a [N, C, H, W] tensor into an F32 raster that takes
/// geotransform and mask from `like`.
Raster tile_from_tensor(const nn::Tensor& t, std::size_t n, const Raster& like);

}  // namespace crossda
