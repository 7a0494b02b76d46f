#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>

#include "crossda/error.hpp"
#include "crossda/raster.hpp"

namespace crossda {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'B', 'T', '1'};
constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 2 + 2 + 2 + 2 + 6 * 8;
constexpr std::uint16_t kFlagMask = 0x0001;

std::size_t sample_size(DType dtype) {
  switch (dtype) {
    case DType::U8: return 1;
    case DType::U16: return 2;
    case DType::F32: return 4;
  }
  return 0;
}

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename U>
  void put(U value) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > in_.size()) throw Error(Errc::corruption, "truncated MBT stream");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(U);
    return value;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_mbt(const Raster& r) {
  r.validate();
  if (r.bands() == 0 || r.width() == 0 || r.height() == 0) {
    throw Error(Errc::dimension, "cannot encode an empty raster");
  }
  const bool with_mask = r.mask_explicit() || r.valid_count() != r.pixel_count();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + r.samples().size() * sample_size(r.dtype()) +
              (with_mask ? r.pixel_count() : 0));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  ByteWriter w(out);
  w.put(static_cast<std::uint32_t>(r.width()));
  w.put(static_cast<std::uint32_t>(r.height()));
  w.put(static_cast<std::uint16_t>(r.bands()));
  w.put(static_cast<std::uint16_t>(r.dtype()));
  w.put(static_cast<std::uint16_t>(with_mask ? kFlagMask : 0));
  w.put(static_cast<std::uint16_t>(0));
  const GeoTransform& gt = r.geotransform();
  for (double v : {gt.origin_x, gt.origin_y, gt.pixel_size_x, gt.pixel_size_y, gt.rotation_x, gt.rotation_y}) {
    w.put_f64(v);
  }
  switch (r.dtype()) {
    case DType::U8:
      for (float v : r.samples()) w.put(static_cast<std::uint8_t>(v));
      break;
    case DType::U16:
      for (float v : r.samples()) w.put(static_cast<std::uint16_t>(v));
      break;
    case DType::F32:
      for (float v : r.samples()) w.put_f32(v);
      break;
  }
  if (with_mask) {
    const auto mask = r.validmask();
    out.insert(out.end(), mask.begin(), mask.end());
  }
  return out;
}

Raster decode_mbt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(Errc::format, "missing MBT1 magic");
  }
  ByteReader in(bytes.subspan(kMagic.size()));
  const auto width = in.get<std::uint32_t>();
  const auto height = in.get<std::uint32_t>();
  const auto bands = in.get<std::uint16_t>();
  const auto dtype_code = in.get<std::uint16_t>();
  const auto flags = in.get<std::uint16_t>();
  const auto reserved = in.get<std::uint16_t>();
  GeoTransform gt;
  gt.origin_x = in.get_f64();
  gt.origin_y = in.get_f64();
  gt.pixel_size_x = in.get_f64();
  gt.pixel_size_y = in.get_f64();
  gt.rotation_x = in.get_f64();
  gt.rotation_y = in.get_f64();

  if (dtype_code > 2) {
    throw Error(Errc::unsupported_format, "unknown dtype code " + std::to_string(dtype_code));
  }
  if ((flags & ~kFlagMask) != 0 || reserved != 0) {
    throw Error(Errc::format, "unknown header flags or nonzero reserved field");
  }
  if (width == 0 || height == 0 || bands == 0) {
    throw Error(Errc::format, "zero width, height or band count");
  }
  if (gt.pixel_size_x == 0.0 || gt.pixel_size_y == 0.0) {
    throw Error(Errc::format, "zero pixel size in geotransform");
  }
  const auto dtype = static_cast<DType>(dtype_code);
  const bool with_mask = (flags & kFlagMask) != 0;
  const std::size_t pixels = std::size_t{width} * height;
  const std::size_t expected = pixels * bands * sample_size(dtype) + (with_mask ? pixels : 0);
  if (in.remaining() < expected) throw Error(Errc::corruption, "truncated MBT payload");
  if (in.remaining() > expected) throw Error(Errc::corruption, "trailing bytes after MBT payload");

  Raster r(width, height, bands, dtype, gt);
  auto samples = r.samples();
  switch (dtype) {
    case DType::U8:
      for (auto& v : samples) v = static_cast<float>(in.get<std::uint8_t>());
      break;
    case DType::U16:
      for (auto& v : samples) v = static_cast<float>(in.get<std::uint16_t>());
      break;
    case DType::F32:
      for (auto& v : samples) v = in.get_f32();
      break;
  }
  if (with_mask) {
    auto mask = r.validmask();
    for (auto& m : mask) {
      m = in.get<std::uint8_t>();
      if (m > 1) throw Error(Errc::corruption, "validmask byte other than 0 or 1");
    }
    r.set_mask_explicit(true);
  }
  return r;
}

Raster raster_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw Error(Errc::io, "read failure on " + path.string());
  return decode_mbt(bytes);
}

void raster_write(const Raster& r, const std::filesystem::path& path) {
  const auto bytes = encode_mbt(r);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::io, "write failure on " + path.string());
}

}  // namespace crossda
