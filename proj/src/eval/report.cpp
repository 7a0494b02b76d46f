#include <cmath>
#include <fstream>

#include "crossda/error.hpp"
#include "crossda/eval.hpp"

namespace crossda::eval {

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

nlohmann::json iou_json(const IoUReport& r, std::span<const std::string> names) {
  if (names.size() != r.iou.size()) {
    throw Error(Errc::dimension, "report has " + std::to_string(r.iou.size()) + " classes but " +
                                     std::to_string(names.size()) + " names");
  }
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json present = nlohmann::json::object();
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    per_class[names[c]] = round_to(r.iou[c], 2);
    present[names[c]] = static_cast<bool>(r.present[c]);
  }
  return {{"per_class", per_class}, {"present", present}, {"miou", round_to(r.miou, 2)},
          {"acc", round_to(100.0 * r.accuracy, 2)}};
}

namespace {

nlohmann::json points_json(const PointSample& s) {
  return {{"seed", s.seed}, {"n", s.n}, {"agreement", round_to(s.agreement, 4)}};
}

}  // namespace

nlohmann::json build_report(const ReportInputs& in) {
  nlohmann::json doc;
  doc["baseline"] = iou_json(in.baseline, in.class_names);
  doc["adapted"] = iou_json(in.adapted, in.class_names);

  nlohmann::json delta = nlohmann::json::object();
  for (std::size_t c = 0; c < in.class_names.size(); ++c) {
    delta[in.class_names[c]] = round_to(in.adapted.iou[c] - in.baseline.iou[c], 2);
  }
  doc["delta"] = {{"per_class", delta}, {"miou", round_to(in.adapted.miou - in.baseline.miou, 2)}};

  const auto gain = relative_gain(in.baseline.miou, in.adapted.miou);
  doc["relative_gain"] = gain ? nlohmann::json(round_to(*gain, 4)) : nlohmann::json("undefined");
  doc["distributions"] = in.distributions;
  if (in.points) {
    auto p = points_json(*in.points);
    if (in.baseline_points) p["baseline_agreement"] = round_to(in.baseline_points->agreement, 4);
    doc["points"] = p;
  }
  if (in.crosswalk) doc["crosswalk"] = in.crosswalk->to_json();
  for (const auto& [key, value] : in.extra.items()) doc[key] = value;
  return doc;
}

void write_report(const ReportInputs& in, const std::filesystem::path& path) {
  const std::string text = build_report(in).dump(2) + "\n";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

}  // namespace crossda::eval
