#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "crossda/error.hpp"
#include "crossda/raster.hpp"

namespace crossda {

void TileSpec::validate() const {
  if (tile_size == 0) throw Error(Errc::invalid_argument, "tile_size must be positive");
  if (stride == 0 || stride > tile_size) {
    throw Error(Errc::invalid_argument, "stride must satisfy 0 < stride <= tile_size");
  }
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "min_valid_fraction must lie in [0, 1]");
  }
}

Raster composite_bands(std::span<const Raster> inputs) {
  if (inputs.empty()) throw Error(Errc::empty_input, "no bands to composite");
  const Raster& first = inputs.front();
  for (const Raster& in : inputs) {
    if (in.bands() != 1) throw Error(Errc::invalid_argument, "composite inputs must be single-band");
    if (in.width() != first.width() || in.height() != first.height()) {
      throw Error(Errc::dimension, "composite inputs differ in width or height");
    }
    if (in.dtype() != first.dtype()) throw Error(Errc::dtype, "composite inputs differ in dtype");
    if (!(in.geotransform() == first.geotransform())) {
      throw Error(Errc::dimension, "composite inputs differ in geotransform");
    }
  }

  Raster out(first.width(), first.height(), inputs.size(), first.dtype(), first.geotransform());
  bool explicit_mask = false;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const auto src = inputs[b].band(0);
    std::copy(src.begin(), src.end(), out.band(b).begin());
    explicit_mask = explicit_mask || inputs[b].mask_explicit();
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
      if (!inputs[b].valid(p)) out.set_valid(p, false);
    }
  }
  out.set_mask_explicit(explicit_mask);
  return out;
}

BandStats band_stats(const Raster& r, std::size_t bins) {
  if (bins == 0) throw Error(Errc::invalid_argument, "histogram needs at least one bin");
  const std::size_t n = r.valid_count();
  if (n == 0) throw Error(Errc::empty_input, "raster has no valid pixels");

  BandStats stats;
  stats.bands.reserve(r.bands());
  for (std::size_t b = 0; b < r.bands(); ++b) {
    const auto band = r.band(b);
    BandStat s;
    s.valid_count = n;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t p = 0; p < band.size(); ++p) {
      if (!r.valid(p)) continue;
      const double v = band[p];
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      sum += v;
    }
    s.mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t p = 0; p < band.size(); ++p) {
      if (!r.valid(p)) continue;
      const double d = band[p] - s.mean;
      sq += d * d;
    }
    s.std = std::sqrt(sq / static_cast<double>(n));
    // Guard against the last ulp of rounding in the mean.
    s.mean = std::clamp(s.mean, s.min, s.max);

    s.histogram.lower_edge = s.min;
    s.histogram.bin_width = (s.max - s.min) / static_cast<double>(bins);
    s.histogram.counts.assign(bins, 0);
    for (std::size_t p = 0; p < band.size(); ++p) {
      if (!r.valid(p)) continue;
      std::size_t bin = 0;
      if (s.histogram.bin_width > 0.0) {
        const double pos = (band[p] - s.min) / s.histogram.bin_width;
        bin = std::min(bins - 1, static_cast<std::size_t>(pos));
      }
      ++s.histogram.counts[bin];
    }
    stats.bands.push_back(std::move(s));
  }
  return stats;
}

Raster shift_values(const Raster& r, std::span<const std::int64_t> offsets) {
  if (r.dtype() != DType::U16) throw Error(Errc::dtype, "shift_values expects a U16 raster");
  if (offsets.size() != r.bands()) {
    throw Error(Errc::dimension, "expected " + std::to_string(r.bands()) + " offsets, got " +
                                     std::to_string(offsets.size()));
  }
  Raster out = r;
  for (std::size_t b = 0; b < r.bands(); ++b) {
    auto band = out.band(b);
    for (std::size_t p = 0; p < band.size(); ++p) {
      if (!out.valid(p)) continue;
      const auto v = static_cast<std::int64_t>(band[p]) - offsets[b];
      band[p] = static_cast<float>(std::clamp<std::int64_t>(v, 0, 65535));
    }
  }
  return out;
}

std::vector<std::int64_t> estimate_shift_offsets(const BandStats& stats, double percentile) {
  if (!(percentile >= 0.0 && percentile <= 1.0)) {
    throw Error(Errc::range, "percentile must lie in [0, 1]");
  }
  if (stats.bands.empty()) throw Error(Errc::empty_input, "no band statistics");

  std::vector<std::int64_t> offsets;
  offsets.reserve(stats.bands.size());
  for (const BandStat& s : stats.bands) {
    const Histogram& h = s.histogram;
    std::uint64_t total = 0;
    for (auto c : h.counts) total += c;
    if (total == 0) throw Error(Errc::empty_input, "empty histogram");

    const double target = percentile * static_cast<double>(total);
    double value = h.lower_edge + h.bin_width * static_cast<double>(h.counts.size());
    double cumulative = 0.0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double c = static_cast<double>(h.counts[i]);
      if (c > 0.0 && cumulative + c >= target) {
        value = h.lower_edge + h.bin_width * (static_cast<double>(i) + (target - cumulative) / c);
        break;
      }
      cumulative += c;
    }
    offsets.push_back(static_cast<std::int64_t>(std::floor(value)));
  }
  return offsets;
}

Raster set_nodata_mask(const Raster& r, std::span<const std::uint8_t> mask) {
  if (mask.size() != r.pixel_count()) {
    throw Error(Errc::dimension, "mask length does not match width*height");
  }
  Raster out = r;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p] != 0) out.set_valid(p, false);
  }
  return out;
}

std::vector<Tile> tile_dataset(const Raster& image, const Raster& labels, const TileSpec& spec) {
  spec.validate();
  if (labels.bands() != 1) throw Error(Errc::dimension, "label raster must have exactly one band");
  if (image.width() != labels.width() || image.height() != labels.height()) {
    throw Error(Errc::dimension, "image and label rasters differ in size");
  }

  std::vector<Tile> tiles;
  const std::size_t ts = spec.tile_size;
  if (ts > image.width() || ts > image.height()) return tiles;

  const double window_pixels = static_cast<double>(ts * ts);
  for (std::size_t y0 = 0; y0 + ts <= image.height(); y0 += spec.stride) {
    for (std::size_t x0 = 0; x0 + ts <= image.width(); x0 += spec.stride) {
      std::size_t usable = 0;
      for (std::size_t y = y0; y < y0 + ts; ++y) {
        for (std::size_t x = x0; x < x0 + ts; ++x) {
          const std::size_t p = y * image.width() + x;
          if (image.valid(p) && labelled_pixel(labels, p)) ++usable;
        }
      }
      const double fraction = static_cast<double>(usable) / window_pixels;
      if (fraction < spec.min_valid_fraction) continue;
      Tile t{crop(image, x0, y0, ts, ts), crop(labels, x0, y0, ts, ts),
             TileRecord{tiles.size(), x0, y0, fraction}};
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

float u16_from_unit(float x) noexcept {
  if (std::isnan(x)) return 0.0f;
  const double v = std::round((static_cast<double>(x) + 1.0) * 32767.5);
  return static_cast<float>(std::clamp(v, 0.0, 65535.0));
}

Raster rescale_unit(const Raster& r) {
  if (r.dtype() != DType::U16) throw Error(Errc::dtype, "rescale_unit expects a U16 raster");
  Raster out(r.width(), r.height(), r.bands(), DType::F32, r.geotransform());
  std::transform(r.samples().begin(), r.samples().end(), out.samples().begin(), unit_from_u16);
  std::copy(r.validmask().begin(), r.validmask().end(), out.validmask().begin());
  out.set_mask_explicit(r.mask_explicit());
  return out;
}

Raster rescale_back(const Raster& r) {
  if (r.dtype() != DType::F32) throw Error(Errc::dtype, "rescale_back expects an F32 raster");
  constexpr double kSlack = 1e-6;
  Raster out(r.width(), r.height(), r.bands(), DType::U16, r.geotransform());
  for (std::size_t b = 0; b < r.bands(); ++b) {
    const auto src = r.band(b);
    auto dst = out.band(b);
    for (std::size_t p = 0; p < src.size(); ++p) {
      const double x = src[p];
      if (r.valid(p) && !(x >= -1.0 - kSlack && x <= 1.0 + kSlack)) {
        throw Error(Errc::range, "sample " + std::to_string(x) + " outside [-1, 1] at band " +
                                     std::to_string(b) + ", pixel " + std::to_string(p));
      }
      dst[p] = u16_from_unit(src[p]);
    }
  }
  std::copy(r.validmask().begin(), r.validmask().end(), out.validmask().begin());
  out.set_mask_explicit(r.mask_explicit());
  return out;
}

}  // namespace crossda
