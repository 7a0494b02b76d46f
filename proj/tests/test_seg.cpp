#include <algorithm>
#include <cmath>

#include "crossda/labels.hpp"
#include "crossda/seg.hpp"
#include "test_util.hpp"

using namespace crossda;
using namespace crossda::seg;

namespace {

// Four classes in 16x16 blocks, each with its own flat spectral signature.
std::vector<SegSample> separable_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cls(0, 3);
  std::normal_distribution<double> noise(0.0, 0.02);
  const double sig[4][6] = {{-0.5, -0.4, -0.5, -0.1, -0.3, -0.4},
                            {-0.2, -0.1, -0.1, 0.1, 0.0, -0.1},
                            {0.1, 0.2, 0.1, 0.3, 0.3, 0.2},
                            {0.4, 0.3, 0.5, -0.3, 0.5, 0.5}};
  std::vector<SegSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Raster img(64, 64, 6, DType::F32);
    Raster lbl(64, 64, 1, DType::U8);
    for (std::size_t by = 0; by < 4; ++by) {
      for (std::size_t bx = 0; bx < 4; ++bx) {
        const int c = cls(rng);
        for (std::size_t y = by * 16; y < by * 16 + 16; ++y) {
          for (std::size_t x = bx * 16; x < bx * 16 + 16; ++x) {
            lbl.samples()[y * 64 + x] = static_cast<float>(c + 1);
            for (std::size_t b = 0; b < 6; ++b) img.at(b, x, y) = static_cast<float>(sig[c][b] + noise(rng));
          }
        }
      }
    }
    out.push_back({img, lbl});
  }
  return out;
}

std::vector<Raster> images_of(const std::vector<SegSample>& s) {
  std::vector<Raster> v;
  for (const auto& x : s) v.push_back(x.image);
  return v;
}

}  // namespace

TEST_SUITE("segmentation") {

TEST_CASE("band means") {
  const std::vector<Raster> c = {testutil::constant_raster(4, 4, 6, DType::F32, 0.3f)};
  for (double m : compute_band_means(c)) CHECK(m == doctest::Approx(0.3));
  std::vector<Raster> two = {testutil::constant_raster(4, 4, 6, DType::F32, 0.1f),
                             testutil::constant_raster(4, 4, 6, DType::F32, 0.5f)};
  const auto a = compute_band_means(two);
  for (double m : a) CHECK(m == doctest::Approx(0.3));
  std::swap(two[0], two[1]);
  CHECK(compute_band_means(two) == a);

  Raster masked = testutil::constant_raster(2, 1, 6, DType::F32, 0.9f);
  masked.set_valid(1, false);
  masked.at(0, 1, 0) = -0.9f;
  const std::vector<Raster> m = {masked};
  CHECK(compute_band_means(m)[0] == doctest::Approx(0.9));

  const std::vector<Raster> none;
  CHECK_ERRC(compute_band_means(none), Errc::empty_input);
}

TEST_CASE("normalize") {
  std::mt19937_64 rng(3);
  const Raster t = testutil::random_tile(5, 5, 6, rng);
  const BandMeans zero(6, 0.0);
  CHECK(normalize(t, zero) == t);
  const BandMeans m = {0.1, -0.2, 0.3, 0.0, 0.5, -0.5};
  BandMeans neg = m;
  for (auto& v : neg) v = -v;
  const Raster back = normalize(normalize(t, m), neg);
  for (std::size_t i = 0; i < t.samples().size(); ++i) {
    CHECK(back.samples()[i] == doctest::Approx(t.samples()[i]).epsilon(1e-6));
  }
  const BandMeans exact = {0.125, -0.25, 0.375, 0.0, 0.5, -0.5};
  Raster at_means(3, 3, 6, DType::F32);
  for (std::size_t b = 0; b < 6; ++b) {
    for (auto& v : at_means.band(b)) v = static_cast<float>(exact[b]);
  }
  const Raster zeroed = normalize(at_means, exact);
  for (float v : zeroed.samples()) CHECK(v == 0.0f);
  const BandMeans three(3, 0.0);
  CHECK_ERRC(normalize(t, three), Errc::dimension);
}

TEST_CASE("transforms and augmentation") {
  Raster img(5, 5, 2, DType::F32);
  Raster lbl(5, 5, 1, DType::U8);
  for (std::size_t p = 0; p < 25; ++p) {
    img.samples()[p] = static_cast<float>(p);
    img.samples()[25 + p] = static_cast<float>(100 + p);
    lbl.samples()[p] = static_cast<float>(p % 7);
  }
  img.set_valid(3, false);

  Raster r = img;
  for (int i = 0; i < 4; ++i) r = transform_raster(r, 1);
  CHECK(r == img);
  CHECK(transform_raster(transform_raster(img, 4), 4) == img);

  for (int t = 0; t < kTransforms; ++t) {
    const Raster ti = transform_raster(img, t);
    const Raster tl = transform_raster(lbl, t);
    for (std::size_t p = 0; p < 25; ++p) {
      const auto src = static_cast<std::size_t>(ti.samples()[p]);
      CHECK(tl.samples()[p] == lbl.samples()[src]);
      CHECK(ti.samples()[25 + p] == static_cast<float>(100 + src));
      CHECK(ti.valid(p) == img.valid(src));
    }
    std::vector<float> a(lbl.samples().begin(), lbl.samples().end()), b(tl.samples().begin(), tl.samples().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK_ERRC(transform_raster(img, 8), Errc::invalid_argument);

  std::mt19937_64 r1(5), r2(5);
  for (int i = 0; i < 10; ++i) {
    const auto a = augment(img, lbl, r1);
    const auto b = augment(img, lbl, r2);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
  const Raster other(4, 5, 1, DType::U8);
  CHECK_ERRC(augment(img, other, r1), Errc::dimension);
}

TEST_CASE("segmenter shapes") {
  const auto p = make_segmenter(8, 1);
  CHECK(segmenter_classes(p) == 8);
  nn::Tape tape;
  const auto vars = p.bind_frozen(tape);
  const auto x = tape.constant(nn::Tensor(nn::Shape{2, 6, 32, 16}, 0.1f));
  const auto y = segmenter_forward<float>(tape, vars, x);
  CHECK(tape.value(y).shape() == (nn::Shape{2, 8, 32, 16}));
  const auto bad = tape.constant(nn::Tensor(nn::Shape{1, 6, 24, 24}));
  CHECK_ERRC(segmenter_forward<float>(tape, vars, bad), Errc::dimension);
}

TEST_CASE("inference") {
  auto p = make_segmenter(8, 2);
  for (auto& prm : p) prm.value.fill(0.0f);
  // Logit bias of the final layer decides every pixel when all weights are zero.
  auto& bias = p[p.size() - 3];
  REQUIRE(bias.value.size() == 8);
  bias.value[0] = 0.1f;
  bias.value[1] = 3.0f;
  Raster tile = testutil::constant_raster(16, 16, 6, DType::F32, 0.0f);
  tile.set_valid(0, false);
  const std::vector<Raster> one = {tile};
  const auto out = infer(p, one, BandMeans(6, 0.0));
  CHECK(out[0].samples()[0] == 255.0f);
  CHECK(out[0].samples()[1] == 1.0f);

  Raster dead = tile;
  for (std::size_t q = 0; q < 256; ++q) dead.set_valid(q, false);
  const std::vector<Raster> none_valid = {dead};
  const auto dead_out = infer(p, none_valid, BandMeans(6, 0.0));
  for (float v : dead_out[0].samples()) CHECK(v == 255.0f);

  const auto real = make_segmenter(8, 3);
  std::mt19937_64 rng(8);
  std::vector<Raster> tiles;
  for (int i = 0; i < 5; ++i) tiles.push_back(testutil::random_tile(16, 16, 6, rng));
  const BandMeans means(6, 0.05);
  const auto batched = infer(real, tiles, means, 3);
  const auto single = infer(real, tiles, means, 1);
  const auto whole = infer(real, tiles, means, 8);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    CHECK(batched[i] == single[i]);
    CHECK(whole[i] == single[i]);
    for (float v : single[i].samples()) CHECK((v < 8.0f || v == 255.0f));
  }
}

TEST_CASE("training reaches high accuracy on separable data") {
  const auto samples = separable_set(8, 7);
  const auto images = images_of(samples);
  const auto means = compute_band_means(images);
  SegTrainConfig cfg;
  cfg.steps = 500;
  cfg.seed = 7;
  cfg.num_classes = 4;
  const auto r = train_seg(samples, cfg, means);
  REQUIRE(r.log.size() == 500);
  CHECK(r.log.front().lr == 1e-4);
  CHECK(r.log.back().lr < 1e-6);

  const auto pred = infer(r.params, images, means);
  std::size_t ok = 0, total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t q = 0; q < pred[i].pixel_count(); ++q) {
      ok += labels::general_code(static_cast<int>(pred[i].samples()[q])) ==
            static_cast<int>(samples[i].labels.samples()[q]);
      ++total;
    }
  }
  CHECK(static_cast<double>(ok) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("training determinism and early descent") {
  const auto samples = separable_set(2, 9);
  const auto means = compute_band_means(images_of(samples));
  SegTrainConfig cfg;
  cfg.steps = 10;
  cfg.batch = 2;
  cfg.num_classes = 4;
  cfg.augment = false;
  const auto a = train_seg(samples, cfg, means);
  const auto b = train_seg(samples, cfg, means);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(std::equal(a.params[i].value.values().begin(), a.params[i].value.values().end(),
                     b.params[i].value.values().begin()));
  }
  for (std::size_t i = 1; i < a.log.size(); ++i) CHECK(a.log[i].loss < a.log[i - 1].loss);

  const std::vector<SegSample> none;
  CHECK_ERRC(train_seg(none, cfg, means), Errc::empty_input);
  SegTrainConfig bad = cfg;
  bad.batch = 0;
  CHECK_ERRC(bad.validate(), Errc::validation);
}

}  // TEST_SUITE
