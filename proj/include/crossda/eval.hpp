#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossda/labels.hpp"
#include "crossda/raster.hpp"
#include "json.hpp"

namespace crossda::eval {

/// Rows are reference classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t ignored = 0;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

  std::uint64_t& at(std::size_t ref, std::size_t pred) { return counts[ref * k + pred]; }
  std::uint64_t at(std::size_t ref, std::size_t pred) const { return counts[ref * k + pred]; }
  std::uint64_t total() const;
  void merge(const ConfusionMatrix& other);
};

/// Counts pixels labelled in both rasters; every other pixel is ignored.
/// Codes must be class indices below k.
ConfusionMatrix confusion(const Raster& reference, const Raster& prediction, std::size_t k);

struct IoUReport {
  std::vector<double> iou;     // percent
  std::vector<bool> present;   // union > 0
  double miou = 0.0;           // percent, mean over all k classes
  double accuracy = 0.0;       // fraction
};

IoUReport iou_from_confusion(const ConfusionMatrix& m);

/// Arithmetic mean of per-class IoUs, zeros included.
double mean_iou(std::span<const double> per_class);

/// adapted / baseline - 1, or nothing when the baseline is 0.
std::optional<double> relative_gain(double baseline_miou, double adapted_miou);

struct Point {
  std::size_t x = 0, y = 0;
  int reference = 0, predicted = 0;
};

struct PointSample {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<Point> points;
  double agreement = 0.0;
};

/// n distinct jointly labelled pixels drawn without replacement.
PointSample random_point_validation(const Raster& reference, const Raster& prediction, std::size_t n,
                                    std::uint64_t seed);

/// Binary PPM with scheme colours; nodata is black.
std::vector<std::uint8_t> encode_ppm(const Raster& labels, const labels::LabelScheme& scheme);
void render_labelmap(const Raster& labels, const labels::LabelScheme& scheme, const std::filesystem::path& path);

struct ReportInputs {
  IoUReport baseline;
  IoUReport adapted;
  std::vector<std::string> class_names;
  nlohmann::json distributions = nlohmann::json::object();
  std::optional<labels::CrosswalkMatrix> crosswalk;
  std::optional<PointSample> points;           // adapted prediction
  std::optional<PointSample> baseline_points;  // same pixels, baseline prediction
  nlohmann::json extra = nlohmann::json::object();
};

/// Values rounded to 2 decimals, gain to 4.
double round_to(double v, int decimals);
nlohmann::json iou_json(const IoUReport& r, std::span<const std::string> names);
nlohmann::json build_report(const ReportInputs& in);
void write_report(const ReportInputs& in, const std::filesystem::path& path);

}  // namespace crossda::eval
