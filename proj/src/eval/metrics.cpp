#include <fstream>
#include <random>
#include <string>

#include "crossda/error.hpp"
#include "crossda/eval.hpp"

namespace crossda::eval {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k != k) throw Error(Errc::dimension, "cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  ignored += other.ignored;
}

namespace {

void require_pair(const Raster& a, const Raster& b, const char* op) {
  if (a.bands() != 1 || b.bands() != 1) throw Error(Errc::dimension, std::string(op) + ": label rasters must have 1 band");
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(Errc::dimension, std::string(op) + ": rasters are " + std::to_string(a.width()) + "x" +
                                     std::to_string(a.height()) + " and " + std::to_string(b.width()) + "x" +
                                     std::to_string(b.height()));
  }
}

}  // namespace

ConfusionMatrix confusion(const Raster& reference, const Raster& prediction, std::size_t k) {
  require_pair(reference, prediction, "confusion");
  if (k == 0) throw Error(Errc::invalid_argument, "confusion: k must be >= 1");
  ConfusionMatrix m(k);
  const auto r = reference.samples();
  const auto p = prediction.samples();
  for (std::size_t i = 0; i < reference.pixel_count(); ++i) {
    if (!labelled_pixel(reference, i) || !labelled_pixel(prediction, i)) {
      ++m.ignored;
      continue;
    }
    const auto rc = static_cast<std::size_t>(r[i]);
    const auto pc = static_cast<std::size_t>(p[i]);
    if (rc >= k || pc >= k) {
      throw Error(Errc::range, "confusion: code " + std::to_string(std::max(rc, pc)) + " at pixel " +
                                   std::to_string(i) + " is not below k=" + std::to_string(k));
    }
    ++m.at(rc, pc);
  }
  return m;
}

double mean_iou(std::span<const double> per_class) {
  if (per_class.empty()) return 0.0;
  double s = 0.0;
  for (double v : per_class) s += v;
  return s / static_cast<double>(per_class.size());
}

IoUReport iou_from_confusion(const ConfusionMatrix& m) {
  if (m.k == 0) throw Error(Errc::invalid_argument, "iou_from_confusion: k must be >= 1");
  IoUReport r;
  r.iou.assign(m.k, 0.0);
  r.present.assign(m.k, false);
  std::uint64_t diag = 0;
  for (std::size_t c = 0; c < m.k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < m.k; ++j) {
      row += m.at(c, j);
      col += m.at(j, c);
    }
    const std::uint64_t tp = m.at(c, c);
    const std::uint64_t uni = row + col - tp;
    diag += tp;
    if (uni > 0) {
      r.present[c] = true;
      r.iou[c] = 100.0 * static_cast<double>(tp) / static_cast<double>(uni);
    }
  }
  r.miou = mean_iou(r.iou);
  const std::uint64_t total = m.total();
  r.accuracy = total > 0 ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
  return r;
}

std::optional<double> relative_gain(double baseline, double adapted) {
  if (baseline == 0.0) return std::nullopt;
  return adapted / baseline - 1.0;
}

PointSample random_point_validation(const Raster& reference, const Raster& prediction, std::size_t n,
                                    std::uint64_t seed) {
  require_pair(reference, prediction, "random_point_validation");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < reference.pixel_count(); ++i) {
    if (labelled_pixel(reference, i) && labelled_pixel(prediction, i)) pool.push_back(i);
  }
  if (pool.size() < n) {
    throw Error(Errc::empty_input, "random_point_validation: " + std::to_string(pool.size()) +
                                       " jointly labelled pixels, need " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  PointSample s;
  s.seed = seed;
  s.n = n;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    const std::size_t px = pool[i];
    Point p{px % reference.width(), px / reference.width(), static_cast<int>(reference.samples()[px]),
            static_cast<int>(prediction.samples()[px])};
    if (p.reference == p.predicted) ++agree;
    s.points.push_back(p);
  }
  s.agreement = n > 0 ? static_cast<double>(agree) / static_cast<double>(n) : 0.0;
  return s;
}

std::vector<std::uint8_t> encode_ppm(const Raster& labels, const labels::LabelScheme& scheme) {
  if (labels.bands() != 1) throw Error(Errc::dimension, "render_labelmap: label raster must have 1 band");
  const std::string header = "P6\n" + std::to_string(labels.width()) + " " + std::to_string(labels.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * labels.pixel_count());
  const auto s = labels.samples();
  for (std::size_t p = 0; p < labels.pixel_count(); ++p) {
    labels::Rgb c;
    if (labelled_pixel(labels, p)) {
      const auto* e = scheme.find(static_cast<int>(s[p]));
      if (!e) {
        throw Error(Errc::recode, "render_labelmap: code " + std::to_string(static_cast<int>(s[p])) + " at pixel " +
                                      std::to_string(p) + " is not in " + scheme.id());
      }
      c = e->color;
    }
    out.push_back(c.r);
    out.push_back(c.g);
    out.push_back(c.b);
  }
  return out;
}

void render_labelmap(const Raster& labels, const labels::LabelScheme& scheme, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(labels, scheme);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

}  // namespace crossda::eval
