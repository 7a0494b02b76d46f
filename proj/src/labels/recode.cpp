#include <string>

#include "crossda/error.hpp"
#include "crossda/labels.hpp"

namespace crossda::labels {

namespace {

void require_label_raster(const Raster& r, const char* op) {
  if (r.bands() != 1) {
    throw Error(Errc::dimension, std::string(op) + ": label raster must have 1 band, got " + std::to_string(r.bands()));
  }
}

}  // namespace

Raster recode(const Raster& labels, const RecodeMap& map) {
  require_label_raster(labels, "recode");
  Raster out = labels;
  auto s = out.samples();
  for (std::size_t p = 0; p < labels.pixel_count(); ++p) {
    if (!labelled_pixel(labels, p)) continue;
    const int code = static_cast<int>(s[p]);
    const auto it = map.mapping.find(code);
    if (it != map.mapping.end()) {
      s[p] = static_cast<float>(it->second);
    } else if (map.unknown_policy == UnknownPolicy::map_to_nodata) {
      s[p] = static_cast<float>(kLabelNodata);
    } else {
      throw Error(Errc::recode, "code " + std::to_string(code) + " at pixel " + std::to_string(p) + " (x=" +
                                    std::to_string(p % labels.width()) + ", y=" + std::to_string(p / labels.width()) +
                                    ") is not in " + map.from_scheme);
    }
  }
  return out;
}

ClassDistribution class_distribution(std::span<const Raster> rasters, const LabelScheme& scheme) {
  std::map<int, std::uint64_t> counts;
  for (const auto& e : scheme.entries()) counts[e.code] = 0;
  std::uint64_t total = 0;
  for (const auto& r : rasters) {
    require_label_raster(r, "class_distribution");
    const auto s = r.samples();
    for (std::size_t p = 0; p < r.pixel_count(); ++p) {
      if (!labelled_pixel(r, p)) continue;
      const int code = static_cast<int>(s[p]);
      const auto it = counts.find(code);
      if (it == counts.end()) {
        throw Error(Errc::recode, "code " + std::to_string(code) + " at pixel " + std::to_string(p) + " is not in " +
                                      scheme.id());
      }
      ++it->second;
      ++total;
    }
  }
  if (total == 0) throw Error(Errc::empty_input, "class_distribution: no labelled pixels");
  ClassDistribution d;
  d.scheme_id = scheme.id();
  d.labelled_pixels = total;
  for (const auto& [code, n] : counts) d.fractions[code] = static_cast<double>(n) / static_cast<double>(total);
  return d;
}

ClassDistribution class_distribution(const Raster& labels, const LabelScheme& scheme) {
  return class_distribution(std::span<const Raster>(&labels, 1), scheme);
}

ClassDistribution push_forward(const ClassDistribution& dist, const RecodeMap& map, const LabelScheme& to) {
  ClassDistribution out;
  out.scheme_id = to.id();
  out.labelled_pixels = dist.labelled_pixels;
  for (const auto& e : to.entries()) out.fractions[e.code] = 0.0;
  for (const auto& [code, f] : dist.fractions) {
    const auto it = map.mapping.find(code);
    if (it == map.mapping.end()) {
      if (f > 0.0) throw Error(Errc::recode, "code " + std::to_string(code) + " is not in " + map.from_scheme);
      continue;
    }
    out.fractions.at(it->second) += f;
  }
  return out;
}

std::map<int, std::uint64_t> CrosswalkMatrix::marginal_a() const {
  std::map<int, std::uint64_t> m;
  for (const auto& [key, n] : counts) m[key.first] += n;
  return m;
}

std::map<int, std::uint64_t> CrosswalkMatrix::marginal_b() const {
  std::map<int, std::uint64_t> m;
  for (const auto& [key, n] : counts) m[key.second] += n;
  return m;
}

nlohmann::json CrosswalkMatrix::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, n] : counts) cells.push_back({{"a", key.first}, {"b", key.second}, {"count", n}});
  return {{"scheme_a", scheme_a}, {"scheme_b", scheme_b}, {"total", total}, {"counts", cells}};
}

CrosswalkMatrix crosswalk(const Raster& a, const Raster& b, std::string scheme_a, std::string scheme_b) {
  require_label_raster(a, "crosswalk");
  require_label_raster(b, "crosswalk");
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(Errc::dimension, "crosswalk: rasters are " + std::to_string(a.width()) + "x" +
                                     std::to_string(a.height()) + " and " + std::to_string(b.width()) + "x" +
                                     std::to_string(b.height()));
  }
  CrosswalkMatrix m;
  m.scheme_a = std::move(scheme_a);
  m.scheme_b = std::move(scheme_b);
  const auto sa = a.samples();
  const auto sb = b.samples();
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (!labelled_pixel(a, p) || !labelled_pixel(b, p)) continue;
    ++m.counts[{static_cast<int>(sa[p]), static_cast<int>(sb[p])}];
    ++m.total;
  }
  return m;
}

}  // namespace crossda::labels
