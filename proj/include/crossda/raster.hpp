#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace crossda {

enum class DType : std::uint16_t { U8 = 0, U16 = 1, F32 = 2 };

const char* dtype_name(DType dtype) noexcept;

/// Nodata value for 1-band U8 label rasters.
inline constexpr std::uint8_t kLabelNodata = 255;

/// Affine placement of the pixel grid. Informational only; no operation
/// reprojects or resamples. The rotation terms are carried so that files
/// round-trip unchanged.
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size_x = 1.0;
  double pixel_size_y = -1.0;
  double rotation_x = 0.0;
  double rotation_y = 0.0;

  bool operator==(const GeoTransform&) const = default;
};

/// A multiband grid with a per-pixel validity mask.
///
/// Samples are held as 32-bit floats in band-sequential order regardless of
/// the storage dtype; U8 and U16 values are integral and exactly
/// representable. `dtype` decides how samples are encoded on disk and which
/// value range is legal.
class Raster {
 public:
  Raster() = default;
  Raster(std::size_t width, std::size_t height, std::size_t bands, DType dtype,
         GeoTransform geotransform = {});

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t bands() const noexcept { return bands_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }
  DType dtype() const noexcept { return dtype_; }
  bool empty() const noexcept { return pixel_count() == 0 || bands_ == 0; }

  const GeoTransform& geotransform() const noexcept { return geotransform_; }
  void set_geotransform(const GeoTransform& gt) { geotransform_ = gt; }

  std::span<float> samples() noexcept { return samples_; }
  std::span<const float> samples() const noexcept { return samples_; }
  std::span<float> band(std::size_t b);
  std::span<const float> band(std::size_t b) const;

  float& at(std::size_t b, std::size_t x, std::size_t y) {
    return samples_[(b * height_ + y) * width_ + x];
  }
  float at(std::size_t b, std::size_t x, std::size_t y) const {
    return samples_[(b * height_ + y) * width_ + x];
  }

  std::span<std::uint8_t> validmask() noexcept { return validmask_; }
  std::span<const std::uint8_t> validmask() const noexcept { return validmask_; }
  bool valid(std::size_t pixel) const noexcept { return validmask_[pixel] != 0; }
  void set_valid(std::size_t pixel, bool valid) noexcept { validmask_[pixel] = valid ? 1 : 0; }
  std::size_t valid_count() const noexcept;

  /// Whether the mask is written out even when every pixel is valid. Set by
  /// the reader when the source file carried a mask.
  bool mask_explicit() const noexcept { return mask_explicit_; }
  void set_mask_explicit(bool on) noexcept { mask_explicit_ = on; }

  /// Throws Error(dimension|dtype|range) when an invariant does not hold.
  void validate() const;

  /// Field-wise equality; samples compare bitwise so NaN payloads match.
  bool operator==(const Raster& other) const;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t bands_ = 0;
  DType dtype_ = DType::U16;
  GeoTransform geotransform_{};
  std::vector<float> samples_;
  std::vector<std::uint8_t> validmask_;
  bool mask_explicit_ = false;
};

/// Copies the window [x0, x0+w) × [y0, y0+h). Origin of the geotransform is
/// moved to the window corner.
Raster crop(const Raster& r, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

// --- MBT container -------------------------------------------------------

std::vector<std::uint8_t> encode_mbt(const Raster& r);
Raster decode_mbt(std::span<const std::uint8_t> bytes);

Raster raster_read(const std::filesystem::path& path);
void raster_write(const Raster& r, const std::filesystem::path& path);

// --- preprocessing -------------------------------------------------------

struct Histogram {
  double lower_edge = 0.0;
  double bin_width = 0.0;
  std::vector<std::uint64_t> counts;
};

struct BandStat {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population
  std::uint64_t valid_count = 0;
  Histogram histogram;
};

struct BandStats {
  std::vector<BandStat> bands;
};

struct TileSpec {
  std::size_t tile_size = 512;
  std::size_t stride = 512;
  double min_valid_fraction = 0.5;

  static TileSpec square(std::size_t size, double min_valid_fraction = 0.5) {
    return TileSpec{size, size, min_valid_fraction};
  }
  void validate() const;
};

struct TileRecord {
  std::size_t index = 0;
  std::size_t x_offset = 0;
  std::size_t y_offset = 0;
  double valid_fraction = 0.0;
};

struct Tile {
  Raster image;
  Raster labels;
  TileRecord record;
};

/// Stacks single-band rasters into one multiband raster in list order.
Raster composite_bands(std::span<const Raster> inputs);

BandStats band_stats(const Raster& r, std::size_t bins);

/// v -> max(v - offset, 0) on valid pixels of a U16 raster.
Raster shift_values(const Raster& r, std::span<const std::int64_t> offsets);

/// Per band, the value at the given lower percentile of the histogram
/// (linear within the bin), rounded down.
std::vector<std::int64_t> estimate_shift_offsets(const BandStats& stats, double percentile);

/// validmask becomes validmask AND NOT mask.
Raster set_nodata_mask(const Raster& r, std::span<const std::uint8_t> mask);

/// True when a label pixel is valid and carries a value other than
/// kLabelNodata.
inline bool labelled_pixel(const Raster& labels, std::size_t pixel) noexcept {
  return labels.valid(pixel) && labels.samples()[pixel] != static_cast<float>(kLabelNodata);
}

/// Row-major tiling. A window is kept when the fraction of pixels that are
/// valid in the image and labelled is at least spec.min_valid_fraction.
std::vector<Tile> tile_dataset(const Raster& image, const Raster& labels, const TileSpec& spec);

/// U16 -> F32 via v / 32767.5 - 1 over the fixed range [0, 65535].
Raster rescale_unit(const Raster& r);
/// F32 -> U16 via round((x + 1) * 32767.5) clamped to [0, 65535]. Valid
/// samples outside [-1 - 1e-6, 1 + 1e-6] raise a range error.
Raster rescale_back(const Raster& r);

inline float unit_from_u16(float v) noexcept {
  return static_cast<float>(static_cast<double>(v) / 32767.5 - 1.0);
}
float u16_from_unit(float x) noexcept;

}  // namespace crossda
