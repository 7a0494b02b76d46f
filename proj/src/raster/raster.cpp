#include "crossda/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "crossda/error.hpp"

namespace crossda {

const char* dtype_name(DType dtype) noexcept {
  switch (dtype) {
    case DType::U8: return "U8";
    case DType::U16: return "U16";
    case DType::F32: return "F32";
  }
  return "?";
}

Raster::Raster(std::size_t width, std::size_t height, std::size_t bands, DType dtype,
               GeoTransform geotransform)
    : width_(width),
      height_(height),
      bands_(bands),
      dtype_(dtype),
      geotransform_(geotransform),
      samples_(width * height * bands, 0.0f),
      validmask_(width * height, 1) {}

std::span<float> Raster::band(std::size_t b) {
  if (b >= bands_) throw Error(Errc::invalid_argument, "band index " + std::to_string(b) + " out of range");
  return std::span<float>(samples_).subspan(b * pixel_count(), pixel_count());
}

std::span<const float> Raster::band(std::size_t b) const {
  if (b >= bands_) throw Error(Errc::invalid_argument, "band index " + std::to_string(b) + " out of range");
  return std::span<const float>(samples_).subspan(b * pixel_count(), pixel_count());
}

std::size_t Raster::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(validmask_.begin(), validmask_.end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

void Raster::validate() const {
  if (samples_.size() != width_ * height_ * bands_) {
    throw Error(Errc::dimension, "sample count does not match width*height*bands");
  }
  if (validmask_.size() != width_ * height_) {
    throw Error(Errc::dimension, "validmask length does not match width*height");
  }
  if (geotransform_.pixel_size_x == 0.0 || geotransform_.pixel_size_y == 0.0) {
    throw Error(Errc::format, "pixel size must be nonzero");
  }
  double hi = 0.0;
  switch (dtype_) {
    case DType::U8: hi = 255.0; break;
    case DType::U16: hi = 65535.0; break;
    case DType::F32: return;
  }
  for (float v : samples_) {
    if (!(v >= 0.0f && v <= hi) || std::floor(v) != v) {
      throw Error(Errc::range, std::string("sample ") + std::to_string(v) + " not representable as " +
                                   dtype_name(dtype_));
    }
  }
}

bool Raster::operator==(const Raster& other) const {
  return width_ == other.width_ && height_ == other.height_ && bands_ == other.bands_ &&
         dtype_ == other.dtype_ && geotransform_ == other.geotransform_ &&
         validmask_ == other.validmask_ &&
         (mask_explicit_ || valid_count() != pixel_count()) ==
             (other.mask_explicit_ || other.valid_count() != other.pixel_count()) &&
         samples_.size() == other.samples_.size() &&
         std::memcmp(samples_.data(), other.samples_.data(), samples_.size() * sizeof(float)) == 0;
}

Raster crop(const Raster& r, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > r.width() || y0 + h > r.height()) {
    throw Error(Errc::dimension, "crop window exceeds raster bounds");
  }
  GeoTransform gt = r.geotransform();
  gt.origin_x += static_cast<double>(x0) * gt.pixel_size_x + static_cast<double>(y0) * gt.rotation_x;
  gt.origin_y += static_cast<double>(x0) * gt.rotation_y + static_cast<double>(y0) * gt.pixel_size_y;
  Raster out(w, h, r.bands(), r.dtype(), gt);
  out.set_mask_explicit(r.mask_explicit());
  for (std::size_t b = 0; b < r.bands(); ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      const auto src = r.band(b).subspan((y0 + y) * r.width() + x0, w);
      std::copy(src.begin(), src.end(), out.band(b).begin() + static_cast<std::ptrdiff_t>(y * w));
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.set_valid(y * w + x, r.valid((y0 + y) * r.width() + x0 + x));
    }
  }
  return out;
}

}  // namespace crossda
