#include <algorithm>
#include <string>

#include "crossda/dataset.hpp"
#include "crossda/error.hpp"
#include "crossda/labels.hpp"
#include "crossda/seg.hpp"

namespace crossda::seg {

namespace {

using nn::Activation;
using nn::Shape;
using nn::Var;

constexpr std::size_t kInputBands = 6;

// Parameter slots: enc1..enc4, dec1..dec4, head.
constexpr std::size_t kEnc = 0;
constexpr std::size_t kDec = 8;
constexpr std::size_t kHead = 16;
constexpr std::size_t kSlots = 18;

void add_conv(nn::ParameterSet& ps, const std::string& name, std::size_t co, std::size_t ci, std::size_t k,
              std::mt19937_64& rng) {
  const std::size_t fan_in = ci * k * k;
  ps.init_uniform(ps.add(name + ".w", Shape{co, ci, k, k}), fan_in, rng);
  ps.init_uniform(ps.add(name + ".b", Shape{co}), fan_in, rng);
}

}  // namespace

BandMeans compute_band_means(std::span<const Raster> tiles) {
  if (tiles.empty()) throw Error(Errc::empty_input, "compute_band_means: no tiles");
  const std::size_t bands = tiles.front().bands();
  std::vector<double> sum(bands, 0.0);
  std::vector<std::uint64_t> count(bands, 0);
  for (const auto& t : tiles) {
    if (t.bands() != bands) throw Error(Errc::dimension, "compute_band_means: tiles differ in band count");
    const Raster u = unit_tile(t);
    for (std::size_t b = 0; b < bands; ++b) {
      const auto v = u.band(b);
      for (std::size_t p = 0; p < v.size(); ++p) {
        if (!u.valid(p)) continue;
        sum[b] += v[p];
        ++count[b];
      }
    }
  }
  BandMeans means(bands);
  for (std::size_t b = 0; b < bands; ++b) {
    if (count[b] == 0) throw Error(Errc::empty_input, "compute_band_means: band " + std::to_string(b) + " has no valid pixel");
    means[b] = sum[b] / static_cast<double>(count[b]);
  }
  return means;
}

Raster normalize(const Raster& tile, const BandMeans& means) {
  if (tile.bands() != means.size()) {
    throw Error(Errc::dimension, "normalize: tile has " + std::to_string(tile.bands()) + " bands, means " +
                                     std::to_string(means.size()));
  }
  Raster out = unit_tile(tile);
  for (std::size_t b = 0; b < out.bands(); ++b) {
    for (auto& v : out.band(b)) v = static_cast<float>(static_cast<double>(v) - means[b]);
  }
  return out;
}

Raster transform_raster(const Raster& r, int t) {
  if (t < 0 || t >= kTransforms) throw Error(Errc::invalid_argument, "transform index must be in [0, 8)");
  Raster cur = r;
  if (t >= 4) {
    Raster f = cur;
    for (std::size_t b = 0; b < cur.bands(); ++b) {
      for (std::size_t y = 0; y < cur.height(); ++y) {
        for (std::size_t x = 0; x < cur.width(); ++x) f.at(b, cur.width() - 1 - x, y) = cur.at(b, x, y);
      }
    }
    for (std::size_t y = 0; y < cur.height(); ++y) {
      for (std::size_t x = 0; x < cur.width(); ++x) {
        f.set_valid(y * cur.width() + (cur.width() - 1 - x), cur.valid(y * cur.width() + x));
      }
    }
    cur = std::move(f);
  }
  for (int q = 0; q < t % 4; ++q) {
    // (x, y) -> (y, w - 1 - x)
    const std::size_t w = cur.width(), h = cur.height();
    Raster rot(h, w, cur.bands(), cur.dtype(), cur.geotransform());
    rot.set_mask_explicit(cur.mask_explicit());
    for (std::size_t b = 0; b < cur.bands(); ++b) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) rot.at(b, y, w - 1 - x) = cur.at(b, x, y);
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) rot.set_valid((w - 1 - x) * h + y, cur.valid(y * w + x));
    }
    cur = std::move(rot);
  }
  return cur;
}

std::pair<Raster, Raster> augment(const Raster& image, const Raster& labels, std::mt19937_64& rng) {
  if (image.width() != labels.width() || image.height() != labels.height()) {
    throw Error(Errc::dimension, "augment: image and label tiles are not aligned");
  }
  const int t = static_cast<int>(std::uniform_int_distribution<int>(0, kTransforms - 1)(rng));
  return {transform_raster(image, t), transform_raster(labels, t)};
}

nn::ParameterSet make_segmenter(std::size_t classes, std::uint64_t seed) {
  if (classes < 1 || classes > 254) throw Error(Errc::validation, "segmenter classes must be in [1, 254]");
  std::mt19937_64 rng(seed);
  nn::ParameterSet ps;
  add_conv(ps, "enc1", 32, kInputBands, 3, rng);
  add_conv(ps, "enc2", 64, 32, 3, rng);
  add_conv(ps, "enc3", 128, 64, 3, rng);
  add_conv(ps, "enc4", 256, 128, 3, rng);
  add_conv(ps, "dec1", 128, 256, 3, rng);
  add_conv(ps, "dec2", 64, 128, 3, rng);
  add_conv(ps, "dec3", 32, 64, 3, rng);
  add_conv(ps, "dec4", classes, 32, 3, rng);
  add_conv(ps, "head", classes, kInputBands, 1, rng);
  return ps;
}

std::size_t segmenter_classes(const nn::ParameterSet& params) {
  if (params.size() != kSlots) throw Error(Errc::dimension, "segmenter expects 18 parameter tensors");
  return params[kHead].value.shape()[0];
}

template <typename T>
Var segmenter_forward(nn::BasicTape<T>& tape, std::span<const Var> p, Var x) {
  if (p.size() != kSlots) throw Error(Errc::dimension, "segmenter expects 18 parameter tensors");
  const auto& xs = tape.value(x).shape();
  if (xs.rank() != 4 || xs[1] != kInputBands || xs[2] % 16 != 0 || xs[3] % 16 != 0) {
    throw Error(Errc::dimension, "segmenter input must be [N,6,H,W] with H and W multiples of 16, got " + xs.str());
  }
  Var e[4];
  Var h = x;
  for (std::size_t i = 0; i < 4; ++i) {
    h = nn::activation(tape, nn::conv2d(tape, h, p[kEnc + 2 * i], p[kEnc + 2 * i + 1], 2, 1), Activation::relu);
    e[i] = h;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    h = nn::upsample_conv2d(tape, h, p[kDec + 2 * i], p[kDec + 2 * i + 1]);
    h = nn::activation(tape, nn::add(tape, h, e[2 - i]), Activation::relu);
  }
  h = nn::upsample_conv2d(tape, h, p[kDec + 6], p[kDec + 7]);
  return nn::add(tape, h, nn::conv2d(tape, x, p[kHead], p[kHead + 1], 1, 0));
}

nn::Tensor prepare_images(std::span<const Raster* const> images, const BandMeans& means) {
  std::vector<Raster> norm;
  norm.reserve(images.size());
  for (const Raster* r : images) {
    Raster n = normalize(*r, means);
    for (std::size_t b = 0; b < n.bands(); ++b) {
      auto v = n.band(b);
      for (std::size_t p = 0; p < v.size(); ++p) {
        if (!n.valid(p)) v[p] = 0.0f;
      }
    }
    norm.push_back(std::move(n));
  }
  return stack_tiles(std::span<const Raster>(norm));
}

std::vector<std::uint8_t> prepare_targets(std::span<const Raster* const> images, std::span<const Raster* const> labels,
                                          std::size_t classes) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Raster& img = *images[i];
    const Raster& lbl = *labels[i];
    if (lbl.bands() != 1 || lbl.width() != img.width() || lbl.height() != img.height()) {
      throw Error(Errc::dimension, "label tile does not match its image tile");
    }
    const auto s = lbl.samples();
    for (std::size_t p = 0; p < lbl.pixel_count(); ++p) {
      if (!img.valid(p) || !labelled_pixel(lbl, p)) {
        out.push_back(kLabelNodata);
        continue;
      }
      const auto idx = labels::class_index(static_cast<std::uint8_t>(s[p]));
      if (s[p] < 1 || idx >= classes) {
        throw Error(Errc::range, "label code " + std::to_string(static_cast<int>(s[p])) + " outside [1, " +
                                     std::to_string(classes) + "]");
      }
      out.push_back(idx);
    }
  }
  return out;
}

std::vector<Raster> infer(const nn::ParameterSet& params, std::span<const Raster> tiles, const BandMeans& means,
                          std::size_t batch) {
  const std::size_t classes = segmenter_classes(params);
  if (batch == 0) throw Error(Errc::invalid_argument, "infer: batch must be >= 1");
  std::vector<Raster> out;
  out.reserve(tiles.size());
  for (std::size_t start = 0; start < tiles.size(); start += batch) {
    const std::size_t end = std::min(tiles.size(), start + batch);
    std::vector<const Raster*> group;
    for (std::size_t i = start; i < end; ++i) group.push_back(&tiles[i]);
    nn::Tape tape;
    const auto p = params.bind_frozen(tape);
    const Var logits = segmenter_forward<float>(tape, p, tape.constant(prepare_images(group, means)));
    const auto& l = tape.value(logits);
    const std::size_t hw = l.shape()[2] * l.shape()[3];
    for (std::size_t n = 0; n < group.size(); ++n) {
      const Raster& img = *group[n];
      Raster lbl(img.width(), img.height(), 1, DType::U8, img.geotransform());
      auto s = lbl.samples();
      for (std::size_t q = 0; q < hw; ++q) {
        if (!img.valid(q)) {
          s[q] = kLabelNodata;
          continue;
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
          if (l[(n * classes + c) * hw + q] > l[(n * classes + best) * hw + q]) best = c;
        }
        s[q] = static_cast<float>(best);
      }
      out.push_back(std::move(lbl));
    }
  }
  return out;
}

template Var segmenter_forward<float>(nn::BasicTape<float>&, std::span<const Var>, Var);
template Var segmenter_forward<double>(nn::BasicTape<double>&, std::span<const Var>, Var);

}  // namespace crossda::seg
