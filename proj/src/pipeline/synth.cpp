#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "crossda/error.hpp"
#include "crossda/labels.hpp"
#include "crossda/pipeline.hpp"

namespace crossda::pipeline {

namespace {

// Band values per GENERAL-8 class in [-1, 1] space.
const std::array<Signature, 8> kDefaultSignatures = {{
    {-0.50, -0.45, -0.50, -0.05, -0.35, -0.45},
    {-0.40, -0.30, -0.35, -0.20, -0.15, -0.30},
    {-0.45, -0.40, -0.42, -0.35, -0.40, -0.50},
    {-0.30, -0.20, -0.20, 0.00, -0.05, -0.20},
    {-0.38, -0.32, -0.28, -0.12, -0.10, -0.22},
    {-0.42, -0.40, -0.45, -0.58, -0.60, -0.60},
    {-0.20, -0.15, -0.10, -0.05, 0.00, -0.05},
    {-0.25, -0.22, -0.20, -0.15, -0.10, -0.12},
}};

std::pair<std::size_t, std::size_t> tile_grid(std::size_t n) {
  std::size_t rows = 1;
  for (std::size_t d = 1; d * d <= n; ++d) {
    if (n % d == 0) rows = d;
  }
  return {rows, n / rows};
}

// Voronoi partition over a jittered grid of seeds, classes assigned by exact
// quota then shuffled.
class RegionField {
 public:
  RegionField(double width, double height, double cell, std::span<const double> mixture, std::mt19937_64& rng)
      : cell_(cell),
        gx_(static_cast<std::size_t>(std::ceil(width / cell))),
        gy_(static_cast<std::size_t>(std::ceil(height / cell))) {
    const std::size_t n = gx_ * gy_;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    px_.resize(n);
    py_.resize(n);
    for (std::size_t j = 0; j < gy_; ++j) {
      for (std::size_t i = 0; i < gx_; ++i) {
        px_[j * gx_ + i] = (static_cast<double>(i) + u(rng)) * cell;
        py_[j * gx_ + i] = (static_cast<double>(j) + u(rng)) * cell;
      }
    }
    std::vector<std::size_t> quota(mixture.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t given = 0;
    for (std::size_t c = 0; c < mixture.size(); ++c) {
      const double exact = mixture[c] * static_cast<double>(n);
      quota[c] = static_cast<std::size_t>(std::floor(exact));
      given += quota[c];
      rem.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; given < n; ++i, ++given) ++quota[rem[i % rem.size()].second];
    cls_.reserve(n);
    for (std::size_t c = 0; c < quota.size(); ++c) cls_.insert(cls_.end(), quota[c], static_cast<std::uint8_t>(c));
    std::shuffle(cls_.begin(), cls_.end(), rng);
  }

  std::uint8_t at(double x, double y) const {
    const auto ci = static_cast<std::ptrdiff_t>(x / cell_);
    const auto cj = static_cast<std::ptrdiff_t>(y / cell_);
    double best = std::numeric_limits<double>::infinity();
    std::uint8_t out = 0;
    for (std::ptrdiff_t j = cj - 2; j <= cj + 2; ++j) {
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(gy_)) continue;
      for (std::ptrdiff_t i = ci - 2; i <= ci + 2; ++i) {
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(gx_)) continue;
        const std::size_t k = static_cast<std::size_t>(j) * gx_ + static_cast<std::size_t>(i);
        const double dx = px_[k] - x, dy = py_[k] - y;
        const double d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          out = cls_[k];
        }
      }
    }
    return out;
  }

 private:
  double cell_;
  std::size_t gx_, gy_;
  std::vector<double> px_, py_;
  std::vector<std::uint8_t> cls_;
};

Raster cloud_mask(std::size_t w, std::size_t h, std::size_t discs, std::mt19937_64& rng) {
  Raster m(w, h, 1, DType::U8);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(h));
  std::uniform_real_distribution<double> ur(4.0, 10.0);
  for (std::size_t d = 0; d < discs; ++d) {
    const double cx = ux(rng), cy = uy(rng), r = ur(rng);
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(cx - r)));
    const auto x1 = static_cast<std::size_t>(std::min(static_cast<double>(w), std::ceil(cx + r)));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(cy - r)));
    const auto y1 = static_cast<std::size_t>(std::min(static_cast<double>(h), std::ceil(cy + r)));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        if (dx * dx + dy * dy <= r * r) m.at(0, x, y) = 1.0f;
      }
    }
  }
  return m;
}

void box_blur(std::vector<double>& plane, std::size_t w, std::size_t h, std::size_t r) {
  if (r == 0) return;
  std::vector<double> tmp(plane.size());
  const auto pass = [&](const std::vector<double>& in, std::vector<double>& out, bool horizontal) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        std::size_t n = 0;
        const std::size_t c = horizontal ? x : y;
        const std::size_t lim = horizontal ? w : h;
        const std::size_t lo = c >= r ? c - r : 0, hi = std::min(lim - 1, c + r);
        for (std::size_t k = lo; k <= hi; ++k, ++n) s += horizontal ? in[y * w + k] : in[k * w + x];
        out[y * w + x] = s / static_cast<double>(n);
      }
    }
  };
  pass(plane, tmp, true);
  pass(tmp, plane, false);
}

constexpr double kCloudValue = 0.9;

}  // namespace

SynthSpec SynthSpec::resolved() const {
  SynthSpec s = *this;
  if (s.classes < 1 || s.classes > kDefaultSignatures.size()) {
    throw Error(Errc::validation, "synth: " + std::to_string(s.classes) + " classes exceed the 8-class scheme");
  }
  if (s.signatures.empty()) s.signatures.assign(kDefaultSignatures.begin(), kDefaultSignatures.begin() + s.classes);
  if (s.mixture.empty()) s.mixture.assign(s.classes, 1.0 / static_cast<double>(s.classes));
  std::mt19937_64 rng(s.seed ^ 0x5eed7a11ULL);
  std::uniform_real_distribution<double> ug(0.6, 1.4), ub(-0.1, 0.1);
  if (s.gain.empty()) {
    for (int b = 0; b < 6; ++b) s.gain.push_back(ug(rng));
  }
  if (s.bias.empty()) {
    for (int b = 0; b < 6; ++b) s.bias.push_back(ub(rng));
  }
  return s;
}

void SynthSpec::validate() const {
  const auto fail = [](const std::string& m) { throw Error(Errc::validation, "synth: " + m); };
  if (classes < 1 || classes > 8) fail(std::to_string(classes) + " classes exceed the 8-class scheme");
  if (tiles_per_domain < 1) fail("tiles_per_domain must be >= 1");
  if (tile_size < 16 || tile_size % 16 != 0) fail("tile_size must be a positive multiple of 16");
  if (!signatures.empty() && signatures.size() != classes) fail("need one signature per class");
  for (const auto& sig : signatures) {
    for (double v : sig) {
      if (!(v >= -1.0 && v <= 1.0)) fail("signature values must lie in [-1, 1]");
    }
  }
  if (!mixture.empty()) {
    if (mixture.size() != classes) fail("need one mixture weight per class");
    double sum = 0.0;
    for (double m : mixture) {
      if (!(m >= 0.0)) fail("mixture weights must be >= 0");
      sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("mixture weights must sum to 1");
  }
  if (!gain.empty() && gain.size() != 6) fail("gain needs 6 entries");
  if (!bias.empty() && bias.size() != 6) fail("bias needs 6 entries");
  for (double g : gain) {
    if (!(g > 0.0)) fail("gains must be > 0");
  }
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(resolution_ratio >= 1.0)) fail("resolution_ratio must be >= 1");
  if (region_size < 2) fail("region_size must be >= 2");
  if (!(clouds_per_tile >= 0.0)) fail("clouds_per_tile must be >= 0");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"seed", seed},
          {"tiles_per_domain", tiles_per_domain},
          {"tile_size", tile_size},
          {"classes", classes},
          {"signatures", signatures},
          {"mixture", mixture},
          {"gain", gain},
          {"bias", bias},
          {"blur_radius", blur_radius},
          {"noise_std", noise_std},
          {"resolution_ratio", resolution_ratio},
          {"source_offset", source_offset},
          {"region_size", region_size},
          {"clouds_per_tile", clouds_per_tile}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.seed = j.value("seed", s.seed);
  s.tiles_per_domain = j.value("tiles_per_domain", s.tiles_per_domain);
  s.tile_size = j.value("tile_size", s.tile_size);
  s.classes = j.value("classes", s.classes);
  s.signatures = j.value("signatures", s.signatures);
  s.mixture = j.value("mixture", s.mixture);
  s.gain = j.value("gain", s.gain);
  s.bias = j.value("bias", s.bias);
  s.blur_radius = j.value("blur_radius", s.blur_radius);
  s.noise_std = j.value("noise_std", s.noise_std);
  s.resolution_ratio = j.value("resolution_ratio", s.resolution_ratio);
  s.source_offset = j.value("source_offset", s.source_offset);
  s.region_size = j.value("region_size", s.region_size);
  s.clouds_per_tile = j.value("clouds_per_tile", s.clouds_per_tile);
  return s;
}

SynthDataset synth_benchmark(const SynthSpec& spec) {
  spec.validate();
  SynthDataset out;
  out.spec = spec.resolved();
  const SynthSpec& s = out.spec;

  const auto [rows, cols] = tile_grid(s.tiles_per_domain);
  const std::size_t w = cols * s.tile_size, h = rows * s.tile_size;
  const std::size_t discs = static_cast<std::size_t>(std::llround(s.clouds_per_tile * static_cast<double>(s.tiles_per_domain)));
  const GeoTransform gt{0.0, 0.0, 20.0, -20.0, 0.0, 0.0};

  std::mt19937_64 master(s.seed);
  std::mt19937_64 src_rng(master());
  std::mt19937_64 tgt_rng(master());

  // Source: rendered on a coarser grid, then nearest-upsampled.
  {
    const RegionField field(static_cast<double>(w), static_cast<double>(h), static_cast<double>(s.region_size),
                            s.mixture, src_rng);
    const double ratio = s.resolution_ratio;
    const auto cw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / ratio));
    const auto ch = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / ratio));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::uint8_t> coarse_cls(cw * ch);
    std::vector<double> coarse(6 * cw * ch);
    for (std::size_t j = 0; j < ch; ++j) {
      for (std::size_t i = 0; i < cw; ++i) {
        const std::uint8_t c = field.at((static_cast<double>(i) + 0.5) * ratio, (static_cast<double>(j) + 0.5) * ratio);
        coarse_cls[j * cw + i] = c;
        for (std::size_t b = 0; b < 6; ++b) {
          coarse[(b * ch + j) * cw + i] = s.signatures[c][b] + s.noise_std * noise(src_rng);
        }
      }
    }
    out.source.image = Raster(w, h, 6, DType::U16, gt);
    out.source.labels = Raster(w, h, 1, DType::U8, gt);
    out.source.cloud_mask = cloud_mask(w, h, discs, src_rng);
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t j = std::min(ch - 1, static_cast<std::size_t>(static_cast<double>(y) / ratio));
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = std::min(cw - 1, static_cast<std::size_t>(static_cast<double>(x) / ratio));
        out.source.labels.at(0, x, y) = static_cast<float>(labels::general_code(coarse_cls[j * cw + i]));
        const bool cloud = out.source.cloud_mask.at(0, x, y) != 0.0f;
        for (std::size_t b = 0; b < 6; ++b) {
          const double v = cloud ? kCloudValue : std::clamp(coarse[(b * ch + j) * cw + i], -1.0, 1.0);
          const double raw = static_cast<double>(u16_from_unit(static_cast<float>(v))) + s.source_offset;
          out.source.image.at(b, x, y) = static_cast<float>(std::min(raw, 65535.0));
        }
      }
    }
  }

  // Target: full resolution, transformed radiometry.
  {
    const RegionField field(static_cast<double>(w), static_cast<double>(h), static_cast<double>(s.region_size),
                            s.mixture, tgt_rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    out.target.labels = Raster(w, h, 1, DType::U8, gt);
    std::vector<std::uint8_t> cls(w * h);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        cls[y * w + x] = field.at(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
        out.target.labels.at(0, x, y) = static_cast<float>(labels::general_code(cls[y * w + x]));
      }
    }
    out.target.image = Raster(w, h, 6, DType::U16, gt);
    std::vector<double> plane(w * h);
    for (std::size_t b = 0; b < 6; ++b) {
      for (std::size_t p = 0; p < w * h; ++p) plane[p] = s.gain[b] * s.signatures[cls[p]][b] + s.bias[b];
      box_blur(plane, w, h, s.blur_radius);
      for (std::size_t p = 0; p < w * h; ++p) {
        const double v = std::clamp(plane[p] + s.noise_std * noise(tgt_rng), -1.0, 1.0);
        out.target.image.samples()[b * w * h + p] = u16_from_unit(static_cast<float>(v));
      }
    }
    out.target.cloud_mask = cloud_mask(w, h, discs, tgt_rng);
    for (std::size_t p = 0; p < w * h; ++p) {
      if (out.target.cloud_mask.samples()[p] == 0.0f) continue;
      for (std::size_t b = 0; b < 6; ++b) out.target.image.samples()[b * w * h + p] = u16_from_unit(kCloudValue);
    }
  }
  return out;
}

void write_synth(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  raster_write(data.source.image, dir / "source_image.mbt");
  raster_write(data.source.labels, dir / "source_labels.mbt");
  raster_write(data.source.cloud_mask, dir / "source_cloudmask.mbt");
  raster_write(data.target.image, dir / "target_image.mbt");
  raster_write(data.target.labels, dir / "target_labels.mbt");
  raster_write(data.target.cloud_mask, dir / "target_cloudmask.mbt");

  const auto write_json = [&](const nlohmann::json& j, const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw Error(Errc::io, "cannot open " + (dir / name).string() + " for writing");
    f << j.dump(2) << "\n";
    if (!f) throw Error(Errc::io, "write failed: " + (dir / name).string());
  };
  write_json(data.spec.to_json(), "spec.json");

  const std::vector<std::int64_t> offsets(6, data.spec.source_offset);
  seg::SegTrainConfig seg;
  seg.num_classes = data.spec.classes;
  seg.seed = data.spec.seed;
  style::StyleTrainConfig st;
  st.seed = data.spec.seed;
  const nlohmann::json config = {
      {"version", 1},
      {"output_dir", "out"},
      {"seed", data.spec.seed},
      {"source",
       {{"image", "source_image.mbt"},
        {"labels", "source_labels.mbt"},
        {"cloud_mask", "source_cloudmask.mbt"},
        {"scheme", std::string(labels::kGeneral)},
        {"offsets", offsets}}},
      {"target",
       {{"image", "target_image.mbt"},
        {"labels", "target_labels.mbt"},
        {"cloud_mask", "target_cloudmask.mbt"},
        {"scheme", std::string(labels::kGeneral)},
        {"offsets", std::vector<std::int64_t>(6, 0)}}},
      {"tiling", {{"tile_size", data.spec.tile_size}, {"stride", data.spec.tile_size}, {"min_valid_fraction", 0.5}}},
      {"style", {{"mode", "stats"}, {"train", st.to_json()}}},
      {"segmentation", seg.to_json()},
      {"evaluation", {{"seed", data.spec.seed}, {"points", 100}}}};
  write_json(config, "config.json");
}

}  // namespace crossda::pipeline
