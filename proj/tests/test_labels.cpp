#include <cmath>
#include <set>

#include "crossda/labels.hpp"
#include "test_util.hpp"

using namespace crossda;
using namespace crossda::labels;

namespace {

Raster label_raster(std::vector<int> codes, std::size_t w) {
  Raster r(w, codes.size() / w, 1, DType::U8);
  for (std::size_t i = 0; i < codes.size(); ++i) r.samples()[i] = static_cast<float>(codes[i]);
  return r;
}

std::string general_of(const LabelScheme& from, const RecodeMap& map, std::string_view name) {
  return builtin_schemes().general.name_of(map.mapping.at(from.code_of(name)));
}

}  // namespace

TEST_SUITE("labels") {

TEST_CASE("registry sizes and general classes") {
  const auto& s = builtin_schemes();
  CHECK(s.nalcms.size() == 19);
  CHECK(s.corine.size() == 31);
  CHECK(s.general.size() == 8);
  const std::vector<std::string> names = {"Forest", "Grassland", "Wetland",    "Cropland",
                                          "Barren", "Settlement", "Water", "Snow and glaciers"};
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(s.general.name_of(static_cast<int>(i + 1)) == names[i]);
  CHECK_NOTHROW(s.nalcms_to_general.validate(s.nalcms, s.general));
  CHECK_NOTHROW(s.corine_to_general.validate(s.corine, s.general));
}

TEST_CASE("table rows") {
  const auto& s = builtin_schemes();
  CHECK(general_of(s.nalcms, s.nalcms_to_general, "Temperate or sub-polar needleleaf forest") == "Forest");
  CHECK(general_of(s.corine, s.corine_to_general, "Glaciers and perpetual snow") == "Snow and glaciers");
  CHECK(general_of(s.corine, s.corine_to_general, "Moors and heathland") == "Wetland");
  CHECK(general_of(s.corine, s.corine_to_general, "Beaches dunes sands") == "Barren");
  bool recorded = false;
  for (const auto& c : s.conflicts) recorded |= c.name == "Beaches dunes sands";
  CHECK(recorded);
}

TEST_CASE("scheme validation") {
  CHECK_ERRC(LabelScheme("x", {{1, "a", {}}, {1, "b", {}}}), Errc::invalid_argument);
  CHECK_ERRC(LabelScheme("x", {{1, "a", {}}, {2, "a", {}}}), Errc::invalid_argument);
  const auto& s = builtin_schemes();
  RecodeMap partial = s.nalcms_to_general;
  partial.mapping.erase(partial.mapping.begin());
  CHECK_ERRC(partial.validate(s.nalcms, s.general), Errc::validation);
}

TEST_CASE("recode") {
  const auto& s = builtin_schemes();
  const int forest = s.nalcms.code_of("Mixed forest");
  Raster r = testutil::constant_raster(4, 4, 1, DType::U8, static_cast<float>(forest));
  r.set_valid(2, false);
  r.samples()[5] = kLabelNodata;
  const Raster g = recode(r, s.nalcms_to_general);
  for (std::size_t p = 0; p < 16; ++p) {
    if (p == 2 || p == 5) continue;
    CHECK(g.samples()[p] == 1.0f);
  }
  CHECK(g.samples()[5] == static_cast<float>(kLabelNodata));
  CHECK(std::equal(g.validmask().begin(), g.validmask().end(), r.validmask().begin()));

  Raster bad = r;
  bad.samples()[7] = 77;
  CHECK_ERRC(recode(bad, s.nalcms_to_general), Errc::recode);
  RecodeMap lenient = s.nalcms_to_general;
  lenient.unknown_policy = UnknownPolicy::map_to_nodata;
  CHECK(recode(bad, lenient).samples()[7] == static_cast<float>(kLabelNodata));

  const Raster gen = label_raster({1, 2, 3, 8}, 2);
  const auto id = RecodeMap::identity(s.general);
  CHECK(recode(gen, id) == gen);
  CHECK(recode(recode(gen, id), id) == gen);
}

TEST_CASE("class_distribution") {
  const auto& s = builtin_schemes();
  const Raster r = label_raster({1, 1, 7, kLabelNodata}, 2);
  const auto d = class_distribution(r, s.general);
  CHECK(d.fractions.at(1) == doctest::Approx(2.0 / 3.0));
  CHECK(d.fractions.at(7) == doctest::Approx(1.0 / 3.0));
  CHECK(d.fractions.at(2) == 0.0);
  CHECK(d.labelled_pixels == 3);
  const Raster empty = label_raster({kLabelNodata, kLabelNodata}, 2);
  CHECK_ERRC(class_distribution(empty, s.general), Errc::empty_input);
}

TEST_CASE("push-forward property") {
  const auto& s = builtin_schemes();
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(s.corine.size()) - 1);
  std::bernoulli_distribution nodata(0.1);
  Raster r(40, 30, 1, DType::U8);
  for (auto& v : r.samples()) {
    v = nodata(rng) ? kLabelNodata : static_cast<float>(s.corine.entries()[pick(rng)].code);
  }
  const auto direct = class_distribution(recode(r, s.corine_to_general), s.general);
  const auto pushed = push_forward(class_distribution(r, s.corine), s.corine_to_general, s.general);
  for (const auto& [code, f] : direct.fractions) CHECK(std::abs(f - pushed.fractions.at(code)) <= 1e-12);
}

TEST_CASE("crosswalk") {
  const Raster a = testutil::constant_raster(3, 3, 1, DType::U8, 2);
  const Raster b = testutil::constant_raster(3, 3, 1, DType::U8, 5);
  auto m = crosswalk(a, b);
  CHECK(m.counts.size() == 1);
  CHECK(m.counts.at({2, 5}) == 9);

  Raster a2 = a, b2 = b;
  for (std::size_t p = 0; p < 9; ++p) (p % 2 ? a2 : b2).set_valid(p, false);
  m = crosswalk(a2, b2);
  CHECK(m.total == 0);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> code(1, 5);
  std::bernoulli_distribution hole(0.2);
  Raster ra(20, 20, 1, DType::U8), rb(20, 20, 1, DType::U8);
  std::uint64_t joint = 0;
  std::map<int, std::uint64_t> ma, mb;
  for (std::size_t p = 0; p < 400; ++p) {
    ra.samples()[p] = hole(rng) ? kLabelNodata : static_cast<float>(code(rng));
    rb.samples()[p] = hole(rng) ? kLabelNodata : static_cast<float>(code(rng));
    if (labelled_pixel(ra, p) && labelled_pixel(rb, p)) {
      ++joint;
      ++ma[static_cast<int>(ra.samples()[p])];
      ++mb[static_cast<int>(rb.samples()[p])];
    }
  }
  m = crosswalk(ra, rb);
  std::uint64_t sum = 0;
  for (const auto& [k, v] : m.counts) sum += v;
  CHECK(sum == joint);
  CHECK(m.total == joint);
  CHECK(m.marginal_a() == ma);
  CHECK(m.marginal_b() == mb);
  CHECK_ERRC(crosswalk(ra, a), Errc::dimension);
}

TEST_CASE("manifest") {
  const auto j = builtin_manifest();
  const auto text = j.dump();
  CHECK(text.find("Beaches dunes sands") != std::string::npos);
  const auto m = scheme_manifest(builtin_schemes().corine, &builtin_schemes().corine_to_general);
  CHECK(m.at("entries").size() == 31);
  CHECK(m.at("recode").size() == 31);
}

TEST_CASE("class index helpers") {
  CHECK(class_index(1) == 0);
  CHECK(class_index(8) == 7);
  CHECK(class_index(kLabelNodata) == kLabelNodata);
  CHECK(general_code(0) == 1);
  CHECK(general_code(kLabelNodata) == kLabelNodata);
}

}  // TEST_SUITE
