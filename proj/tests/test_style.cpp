#include <cmath>

#include "crossda/dataset.hpp"
#include "crossda/style.hpp"
#include "test_util.hpp"

using namespace crossda;
using namespace crossda::style;

namespace {

DomainStyle recompute(std::span<const Raster> tiles) {
  DomainStyle s;
  for (std::size_t b = 0; b < kBands; ++b) {
    double sum = 0.0, n = 0.0;
    for (const auto& t : tiles) {
      const Raster u = unit_tile(t);
      for (std::size_t p = 0; p < u.pixel_count(); ++p) {
        if (!u.valid(p)) continue;
        sum += u.band(b)[p];
        n += 1.0;
      }
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& t : tiles) {
      const Raster u = unit_tile(t);
      for (std::size_t p = 0; p < u.pixel_count(); ++p) {
        if (u.valid(p)) ss += (u.band(b)[p] - mean) * (u.band(b)[p] - mean);
      }
    }
    s.mean.push_back(mean);
    s.std.push_back(std::sqrt(ss / n));
  }
  return s;
}

std::vector<Raster> random_set(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::vector<Raster> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(testutil::random_tile(16, 16, kBands, rng, lo, hi));
  return v;
}

bool params_differ(const nn::ParameterSet& a, const nn::ParameterSet& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].value.size(); ++j) {
      if (a[i].value[j] != b[i].value[j]) return true;
    }
  }
  return false;
}

}  // namespace

TEST_SUITE("style") {

TEST_CASE("extract_domain_style examples") {
  const std::vector<Raster> one = {testutil::constant_raster(4, 4, kBands, DType::F32, 0.2f)};
  auto s = extract_domain_style(one);
  for (std::size_t b = 0; b < kBands; ++b) {
    CHECK(s.mean[b] == doctest::Approx(0.2));
    CHECK(s.std[b] == doctest::Approx(0.0));
  }

  const std::vector<Raster> two = {testutil::constant_raster(4, 4, kBands, DType::F32, -0.5f),
                                   testutil::constant_raster(4, 4, kBands, DType::F32, 0.5f)};
  s = extract_domain_style(two);
  CHECK(s.mean[0] == doctest::Approx(0.0));
  CHECK(s.std[0] == doctest::Approx(0.5));

  auto set = random_set(5, 1, -0.8, 0.6);
  const auto a = extract_domain_style(set);
  std::reverse(set.begin(), set.end());
  const auto b = extract_domain_style(set);
  const auto ref = recompute(set);
  for (std::size_t k = 0; k < kBands; ++k) {
    CHECK(a.mean[k] == doctest::Approx(b.mean[k]).epsilon(1e-12));
    CHECK(a.std[k] == doctest::Approx(b.std[k]).epsilon(1e-12));
    CHECK(a.mean[k] == doctest::Approx(ref.mean[k]).epsilon(1e-9));
    CHECK(a.std[k] == doctest::Approx(ref.std[k]).epsilon(1e-9));
  }

  const std::vector<Raster> none;
  CHECK_ERRC(extract_domain_style(none), Errc::empty_input);

  const auto j = a.to_json();
  const auto back = DomainStyle::from_json(j);
  CHECK(back.mean == a.mean);
  CHECK(back.std == a.std);
}

TEST_CASE("stylize_stats_mode") {
  const auto set = random_set(3, 2, -0.5, 0.5);
  const auto src = extract_domain_style(set);
  const Raster same = stylize_stats_mode(set[0], src, src);
  for (std::size_t i = 0; i < same.samples().size(); ++i) {
    CHECK(same.samples()[i] == doctest::Approx(set[0].samples()[i]).epsilon(1e-6));
  }

  DomainStyle tgt;
  for (std::size_t b = 0; b < kBands; ++b) {
    tgt.mean.push_back(0.1 * static_cast<double>(b) - 0.3);
    tgt.std.push_back(0.05 + 0.01 * static_cast<double>(b));
  }
  Raster at_mu(2, 2, kBands, DType::F32);
  for (std::size_t b = 0; b < kBands; ++b) {
    for (auto& v : at_mu.band(b)) v = static_cast<float>(src.mean[b]);
  }
  const Raster fixed = stylize_stats_mode(at_mu, src, tgt);
  for (std::size_t b = 0; b < kBands; ++b) {
    for (float v : fixed.band(b)) CHECK(v == doctest::Approx(tgt.mean[b]).epsilon(1e-6));
  }

  std::vector<Raster> out;
  for (const auto& t : set) out.push_back(stylize_stats_mode(t, src, tgt));
  const auto got = recompute(out);
  for (std::size_t b = 0; b < kBands; ++b) {
    CHECK(std::abs(got.mean[b] - tgt.mean[b]) <= 1e-3);
    CHECK(std::abs(got.std[b] - tgt.std[b]) <= 1e-3);
  }

  Raster masked = set[1];
  masked.set_valid(3, false);
  CHECK(stylize_stats_mode(masked, src, tgt).validmask()[3] == 0);

  DomainStyle short_style{{0.0}, {1.0}};
  CHECK_ERRC(stylize_stats_mode(set[0], short_style, tgt), Errc::dimension);
}

TEST_CASE("stats-mode stylization is invertible") {
  std::mt19937_64 rng(6);
  Raster u16(8, 8, kBands, DType::U16);
  std::uniform_int_distribution<int> v(20000, 40000);
  for (auto& s : u16.samples()) s = static_cast<float>(v(rng));
  const std::vector<Raster> one = {u16};
  const auto src = extract_domain_style(one);
  DomainStyle tgt = src;
  for (std::size_t b = 0; b < kBands; ++b) {
    tgt.mean[b] += 0.05;
    tgt.std[b] *= 1.3;
  }
  const Raster fwd = rescale_back(stylize_stats_mode(rescale_unit(u16), src, tgt));
  const Raster back = rescale_back(stylize_stats_mode(rescale_unit(fwd), tgt, src));
  for (std::size_t i = 0; i < u16.samples().size(); ++i) {
    CHECK(std::abs(back.samples()[i] - u16.samples()[i]) <= 1.0f);
  }
}

TEST_CASE("stylize_dataset") {
  std::mt19937_64 rng(9);
  std::vector<Raster> tiles;
  for (int i = 0; i < 3; ++i) {
    Raster r(8, 8, kBands, DType::U16);
    std::uniform_int_distribution<int> v(0, 65535);
    for (auto& s : r.samples()) s = static_cast<float>(v(rng));
    r.set_valid(5, false);
    tiles.push_back(r);
  }
  const auto st = extract_domain_style(tiles);
  StylizeInputs in;
  in.source_style = st;
  in.target_style = st;
  const auto out = stylize_dataset(tiles, in);
  REQUIRE(out.size() == tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    CHECK(out[i] == tiles[i]);
  }

  StylizeInputs gan = in;
  gan.mode = StyleMode::gan;
  CHECK_THROWS(stylize_dataset(tiles, gan));
  gan.generator_checkpoint = testutil::temp_dir("stylize") / "absent.ckpt";
  CHECK_ERRC(stylize_dataset(tiles, gan), Errc::missing_checkpoint);
}

TEST_CASE("generator contracts") {
  const auto g = make_generator(3);
  std::mt19937_64 rng(4);
  const Raster tile = testutil::random_tile(64, 64, kBands, rng);
  DomainStyle style;
  for (std::size_t b = 0; b < kBands; ++b) {
    style.mean.push_back(-0.2);
    style.std.push_back(0.3);
  }
  const Raster a = generator_apply(g, tile, style);
  const Raster b = generator_apply(g, tile, style);
  CHECK(a.width() == 64);
  CHECK(a.bands() == kBands);
  CHECK(a == b);
  for (float v : a.samples()) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }

  nn::Tape tape;
  const auto p = g.bind_frozen(tape);
  const auto x = tape.constant(stack_tiles(std::span<const Raster>(&tile, 1)));
  const auto s = tape.constant(style_tensor<float>(style, 1));
  GeneratorTrace tr;
  generator_forward<float>(tape, p, x, s, &tr);
  const auto st = nn::instance_stats(tape, tr.bottleneck);
  const auto& mu = tape.value(tr.style_mu);
  const auto& sg = tape.value(tr.style_sigma);
  for (std::size_t c = 0; c < mu.size(); ++c) {
    CHECK(std::abs(tape.value(st.mu)[c] - mu[c]) <= 1e-4 * std::max(1.0f, std::abs(mu[c])));
    CHECK(std::abs(tape.value(st.sigma)[c] - sg[c]) <= 1e-4 * std::max(1.0f, sg[c]));
  }

  const Raster odd = testutil::random_tile(12, 12, kBands, rng);
  CHECK_ERRC(generator_apply(g, odd, style), Errc::dimension);
}

TEST_CASE("generator output stays bounded") {
  const auto g = make_generator(5);
  std::mt19937_64 rng(10);
  DomainStyle style;
  for (std::size_t b = 0; b < kBands; ++b) {
    style.mean.push_back(0.0);
    style.std.push_back(0.5);
  }
  for (int i = 0; i < 50; ++i) {
    const Raster t = testutil::random_tile(8, 8, kBands, rng, -3.0, 3.0);
    const Raster y = generator_apply(g, t, style);
    for (float v : y.samples()) {
      REQUIRE(std::isfinite(v));
      REQUIRE(std::abs(v) < 1.0f);
    }
  }
}

TEST_CASE("train_style smoke and determinism") {
  const auto src = random_set(2, 11, -0.6, 0.0);
  const auto tgt = random_set(2, 12, -0.2, 0.4);
  const auto ss = extract_domain_style(src);
  const auto ts = extract_domain_style(tgt);
  StyleTrainConfig cfg;
  cfg.steps = 1;
  cfg.batch = 1;
  cfg.seed = 17;
  const auto one = train_style(std::span<const Raster>(src.data(), 1), std::span<const Raster>(tgt.data(), 1), ss,
                               ts, cfg);
  std::mt19937_64 master(cfg.seed);
  const auto g_st = make_generator(master());
  const auto d_t = make_discriminator(master());
  const auto g_ts = make_generator(master());
  const auto d_s = make_discriminator(master());
  CHECK(params_differ(one.g_st, g_st));
  CHECK(params_differ(one.d_t, d_t));
  CHECK(params_differ(one.g_ts, g_ts));
  CHECK(params_differ(one.d_s, d_s));
  StyleTrainConfig zero = cfg;

  cfg.steps = 3;
  cfg.batch = 2;
  const auto dir = testutil::temp_dir("train_style");
  const auto a = train_style(src, tgt, ss, ts, cfg, dir);
  const auto b = train_style(src, tgt, ss, ts, cfg);
  REQUIRE(a.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.log[i].loss_d_st == b.log[i].loss_d_st);
    CHECK(a.log[i].loss_g_ts == b.log[i].loss_g_ts);
    CHECK(a.log[i].eq1_ts == b.log[i].eq1_ts);
  }
  for (const char* name : kStyleCheckpoints) CHECK(std::filesystem::exists(dir / name));
  CHECK(std::filesystem::exists(dir / "style_log.csv"));

  const std::vector<Raster> none;
  CHECK_ERRC(train_style(none, tgt, ss, ts, cfg), Errc::empty_input);
  zero.steps = 0;
  CHECK_ERRC(zero.validate(), Errc::validation);
}

TEST_CASE("mixed dataset") {
  std::vector<SampleRecord> orig = {{"a.mbt", "la.mbt", "original"}};
  const std::vector<std::string> sty = {"sa.mbt"};
  const auto mixed = build_mixed_dataset(orig, sty);
  REQUIRE(mixed.size() == 2);
  CHECK(mixed[1].label_path == "la.mbt");
  CHECK(mixed[1].origin == "stylized");
  CHECK_NOTHROW(validate_mixed_dataset(mixed));

  std::vector<SampleRecord> many;
  std::vector<std::string> many_sty;
  for (int i = 0; i < 1565; ++i) {
    many.push_back({"i" + std::to_string(i), "l" + std::to_string(i), "original"});
    many_sty.push_back("s" + std::to_string(i));
  }
  CHECK(build_mixed_dataset(many, many_sty).size() == 3130);

  const std::vector<std::string> two = {"x", "y"};
  CHECK_THROWS(build_mixed_dataset(orig, two));
  auto orphan = mixed;
  orphan.erase(orphan.begin());
  CHECK_ERRC(validate_mixed_dataset(orphan), Errc::validation);

  const auto dir = testutil::temp_dir("manifest");
  write_manifest(dir / "m.jsonl", mixed);
  CHECK(read_manifest(dir / "m.jsonl") == mixed);
}

}  // TEST_SUITE
