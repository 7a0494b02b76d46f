#include <cmath>
#include <fstream>
#include <set>

#include "crossda/eval.hpp"
#include "test_util.hpp"

using namespace crossda;
using namespace crossda::eval;

namespace {

Raster label_map(std::vector<int> codes, std::size_t w) {
  Raster r(w, codes.size() / w, 1, DType::U8);
  for (std::size_t i = 0; i < codes.size(); ++i) r.samples()[i] = static_cast<float>(codes[i]);
  return r;
}

IoUReport from_ious(std::vector<double> iou) {
  IoUReport r;
  r.present.assign(iou.size(), true);
  r.miou = mean_iou(iou);
  r.iou = std::move(iou);
  return r;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("confusion basics") {
  const Raster a = label_map({0, 1, 2, 3}, 2);
  const auto m = confusion(a, a, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(m.at(i, j) == (i == j ? 1u : 0u));
  }
  const Raster zeros = label_map({0, 0, 0, 0}, 2), ones = label_map({1, 1, 1, 1}, 2);
  const auto off = confusion(zeros, ones, 2);
  CHECK(off.at(0, 1) == 4);
  CHECK(off.total() == 4);

  Raster holes = a;
  holes.samples()[1] = kLabelNodata;
  holes.set_valid(2, false);
  const auto h = confusion(holes, a, 4);
  CHECK(h.total() == 2);
  CHECK(h.ignored == 2);

  CHECK_ERRC(confusion(a, label_map({0, 1}, 2), 4), Errc::dimension);
  CHECK_ERRC(confusion(a, a, 3), Errc::range);
}

TEST_CASE("iou worked example") {
  const Raster ref = label_map({0, 0, 1, 1}, 2);
  const Raster pred = label_map({0, 1, 1, 1}, 2);
  const auto r = iou_from_confusion(confusion(ref, pred, 2));
  CHECK(r.iou[0] == doctest::Approx(50.0));
  CHECK(r.iou[1] == doctest::Approx(200.0 / 3.0));
  CHECK(round_to(r.miou, 2) == 58.33);
  CHECK(r.accuracy == doctest::Approx(0.75));

  const auto same = iou_from_confusion(confusion(ref, ref, 4));
  CHECK(same.iou[0] == 100.0);
  CHECK(same.iou[1] == 100.0);
  CHECK_FALSE(same.present[2]);
  CHECK(same.iou[2] == 0.0);
  CHECK(same.miou == doctest::Approx(50.0));
  CHECK(same.accuracy == 1.0);
}

TEST_CASE("iou is equivariant under class permutation") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> c(0, 4);
  std::vector<int> ra(64), rb(64);
  for (auto& v : ra) v = c(rng);
  for (auto& v : rb) v = c(rng);
  const int perm[5] = {3, 0, 4, 1, 2};
  std::vector<int> pa(64), pb(64);
  for (std::size_t i = 0; i < 64; ++i) {
    pa[i] = perm[ra[i]];
    pb[i] = perm[rb[i]];
  }
  const auto r = iou_from_confusion(confusion(label_map(ra, 8), label_map(rb, 8), 5));
  const auto p = iou_from_confusion(confusion(label_map(pa, 8), label_map(pb, 8), 5));
  for (int k = 0; k < 5; ++k) CHECK(p.iou[perm[k]] == doctest::Approx(r.iou[k]));
  CHECK(p.miou == doctest::Approx(r.miou));
}

TEST_CASE("mean and gain from published per-class values") {
  const std::vector<double> base = {35.19, 22.98, 0, 0, 5.80, 0, 72.46, 11.98};
  const std::vector<double> adapted = {53.82, 22.46, 0, 19.92, 22.82, 33.33, 81.51, 28.80};
  CHECK(std::abs(mean_iou(base) - 18.55) <= 0.005);
  CHECK(std::abs(mean_iou(adapted) - 32.83) <= 0.005);
  const auto g = relative_gain(mean_iou(base), mean_iou(adapted));
  REQUIRE(g.has_value());
  CHECK(std::abs(100.0 * *g - 77.0) <= 0.1);
  CHECK(relative_gain(20.0, 20.0).value() == 0.0);
  CHECK_FALSE(relative_gain(0.0, 20.0).has_value());
}

TEST_CASE("report") {
  const std::vector<std::string> names = {"a", "b"};
  ReportInputs in;
  in.baseline = from_ious({0.0, 0.0});
  in.adapted = from_ious({50.0, 25.0});
  in.class_names = names;
  auto j = build_report(in);
  CHECK(j.at("relative_gain") == "undefined");
  CHECK(j.at("adapted").at("miou") == 37.5);
  CHECK(j.at("delta").at("per_class").at("a") == 50.0);

  in.baseline = in.adapted;
  j = build_report(in);
  CHECK(j.at("relative_gain") == 0.0);

  const auto dir = testutil::temp_dir("report");
  write_report(in, dir / "r.json");
  std::ifstream f(dir / "r.json");
  CHECK(nlohmann::json::parse(f) == j);
  CHECK_ERRC(write_report(in, "/nonexistent_dir_xyz/r.json"), Errc::io);
}

TEST_CASE("random point validation") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> c(0, 7);
  Raster ref(30, 30, 1, DType::U8);
  for (auto& v : ref.samples()) v = static_cast<float>(c(rng));
  ref.samples()[0] = kLabelNodata;

  const auto same = random_point_validation(ref, ref, 100, 4);
  CHECK(same.agreement == 1.0);
  CHECK(same.points.size() == 100);
  const auto again = random_point_validation(ref, ref, 100, 4);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(again.points[i].x == same.points[i].x);
    CHECK(again.points[i].y == same.points[i].y);
  }
  std::set<std::pair<std::size_t, std::size_t>> uniq;
  for (const auto& p : same.points) {
    uniq.insert({p.x, p.y});
    CHECK((p.x != 0 || p.y != 0));
  }
  CHECK(uniq.size() == 100);

  const double p = 0.2;
  Raster big(100, 100, 1, DType::U8), other(100, 100, 1, DType::U8);
  for (std::size_t i = 0; i < 10000; ++i) {
    big.samples()[i] = 1;
    other.samples()[i] = i % 5 == 0 ? 2.0f : 1.0f;
  }
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) mean += random_point_validation(big, other, 100, seed).agreement;
  mean /= 100.0;
  CHECK(std::abs(mean - (1.0 - p)) <= 3.0 * std::sqrt(p * (1.0 - p) / 100.0));

  const auto all = random_point_validation(big, other, 10000, 1);
  const auto acc = iou_from_confusion(confusion(big, other, 3)).accuracy;
  CHECK(all.agreement == doctest::Approx(acc));

  CHECK_ERRC(random_point_validation(label_map({1, 2}, 2), label_map({1, 2}, 2), 3, 0), Errc::empty_input);
}

TEST_CASE("ppm rendering") {
  const auto& g = labels::builtin_schemes().general;
  const int water = g.code_of("Water");
  const auto bytes = encode_ppm(label_map({water}, 1), g);
  const std::string header = "P6\n1 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 3);
  CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
  const auto c = g.find(water)->color;
  CHECK(bytes[header.size()] == c.r);
  CHECK(bytes[header.size() + 1] == c.g);
  CHECK(bytes[header.size() + 2] == c.b);

  const auto nod = encode_ppm(label_map({kLabelNodata}, 1), g);
  CHECK(nod[header.size()] == 0);
  CHECK(nod[header.size() + 1] == 0);
  CHECK(nod[header.size() + 2] == 0);
  CHECK_ERRC(encode_ppm(label_map({42}, 1), g), Errc::recode);
}

}  // TEST_SUITE
