#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "crossda/error.hpp"
#include "crossda/raster.hpp"
#include "doctest.h"

#define CHECK_ERRC(expr, errc)                                   \
  do {                                                           \
    bool thrown_ = false;                                        \
    try {                                                        \
      (void)(expr);                                              \
    } catch (const crossda::Error& e_) {                         \
      thrown_ = true;                                            \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());             \
    }                                                            \
    CHECK_MESSAGE(thrown_, "expected an error from " #expr);     \
  } while (0)

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("crossda_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// F32 tile with samples drawn from U(lo, hi).
inline crossda::Raster random_tile(std::size_t w, std::size_t h, std::size_t bands, std::mt19937_64& rng,
                                   double lo = -1.0, double hi = 1.0) {
  crossda::Raster r(w, h, bands, crossda::DType::F32);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : r.samples()) v = static_cast<float>(u(rng));
  return r;
}

inline crossda::Raster constant_raster(std::size_t w, std::size_t h, std::size_t bands, crossda::DType dt, float v) {
  crossda::Raster r(w, h, bands, dt);
  for (auto& s : r.samples()) s = v;
  return r;
}

}  // namespace testutil
