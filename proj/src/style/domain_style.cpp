#include <algorithm>
#include <cmath>
#include <string>

#include "crossda/dataset.hpp"
#include "crossda/error.hpp"
#include "crossda/nn/checkpoint.hpp"
#include "crossda/style.hpp"

namespace crossda::style {

nlohmann::json DomainStyle::to_json() const { return {{"mean", mean}, {"std", std}}; }

DomainStyle DomainStyle::from_json(const nlohmann::json& j) {
  DomainStyle s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size()) throw Error(Errc::validation, "style mean and std lengths differ");
  return s;
}

DomainStyle extract_domain_style(std::span<const Raster> tiles) {
  if (tiles.empty()) throw Error(Errc::empty_input, "extract_domain_style: no tiles");
  const std::size_t bands = tiles.front().bands();
  std::vector<Raster> unit;
  unit.reserve(tiles.size());
  for (const auto& t : tiles) {
    if (t.bands() != bands) throw Error(Errc::dimension, "extract_domain_style: tiles differ in band count");
    unit.push_back(unit_tile(t));
  }
  DomainStyle s;
  s.mean.assign(bands, 0.0);
  s.std.assign(bands, 0.0);
  for (std::size_t b = 0; b < bands; ++b) {
    double sum = 0.0;
    std::uint64_t n = 0;
    for (const auto& t : unit) {
      const auto v = t.band(b);
      for (std::size_t p = 0; p < v.size(); ++p) {
        if (!t.valid(p)) continue;
        sum += v[p];
        ++n;
      }
    }
    if (n == 0) throw Error(Errc::empty_input, "extract_domain_style: band " + std::to_string(b) + " has no valid pixel");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& t : unit) {
      const auto v = t.band(b);
      for (std::size_t p = 0; p < v.size(); ++p) {
        if (!t.valid(p)) continue;
        const double d = v[p] - mean;
        ss += d * d;
      }
    }
    s.mean[b] = mean;
    s.std[b] = std::sqrt(ss / static_cast<double>(n));
  }
  return s;
}

Raster stylize_stats_mode(const Raster& tile, const DomainStyle& source, const DomainStyle& target) {
  if (tile.dtype() != DType::F32) throw Error(Errc::dtype, "stylize_stats_mode expects an F32 tile");
  if (tile.bands() != source.bands() || tile.bands() != target.bands()) {
    throw Error(Errc::dimension, "stylize_stats_mode: tile has " + std::to_string(tile.bands()) + " bands, styles " +
                                     std::to_string(source.bands()) + " and " + std::to_string(target.bands()));
  }
  Raster out = tile;
  for (std::size_t b = 0; b < tile.bands(); ++b) {
    const double scale = target.std[b] / std::max(source.std[b], kStyleEps);
    auto v = out.band(b);
    for (std::size_t p = 0; p < v.size(); ++p) {
      if (!tile.valid(p)) continue;
      const double y = scale * (static_cast<double>(v[p]) - source.mean[b]) + target.mean[b];
      v[p] = static_cast<float>(std::clamp(y, -1.0, 1.0));
    }
  }
  return out;
}

const char* style_mode_name(StyleMode m) noexcept { return m == StyleMode::stats ? "stats" : "gan"; }

StyleMode parse_style_mode(std::string_view s) {
  if (s == "stats") return StyleMode::stats;
  if (s == "gan") return StyleMode::gan;
  throw Error(Errc::validation, "style mode must be 'stats' or 'gan', got '" + std::string(s) + "'");
}

std::vector<Raster> stylize_dataset(std::span<const Raster> tiles, const StylizeInputs& in) {
  std::optional<nn::ParameterSet> generator;
  if (in.mode == StyleMode::gan) {
    if (!in.generator_checkpoint) throw Error(Errc::missing_checkpoint, "gan mode needs a generator checkpoint");
    generator = make_generator(0);
    nn::assign_parameters(*generator, nn::load_checkpoint(*in.generator_checkpoint).params);
  }
  std::vector<Raster> out;
  out.reserve(tiles.size());
  for (const auto& t : tiles) {
    const Raster unit = unit_tile(t);
    Raster styled = in.mode == StyleMode::stats ? stylize_stats_mode(unit, in.source_style, in.target_style)
                                                : generator_apply(*generator, unit, in.target_style);
    out.push_back(rescale_back(styled));
  }
  return out;
}

}  // namespace crossda::style
