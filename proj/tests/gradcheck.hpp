#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "crossda/nn/ops.hpp"
#include "crossda/nn/params.hpp"

namespace gradcheck {

using TapeD = crossda::nn::BasicTape<double>;
using ParamsD = crossda::nn::BasicParameterSet<double>;
using TensorD = crossda::nn::BasicTensor<double>;
using crossda::nn::Var;

/// Builds a scalar loss from the parameters bound on the tape.
using Builder = std::function<Var(TapeD&, std::span<const Var>)>;

struct Result {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double loss_value(ParamsD& params, const Builder& build) {
  TapeD tape;
  const auto vars = params.bind(tape, false);
  return tape.value(build(tape, vars))[0];
}

/// Central differences at `coords` randomly drawn scalar coordinates,
/// compared with the reverse-mode gradient. Relative error is
/// |a - n| / max(|a|, |n|, floor).
inline Result check(ParamsD& params, const Builder& build, std::size_t coords, std::uint64_t seed, double h,
                    double floor = 1e-8) {
  params.zero_grad();
  {
    TapeD tape;
    const auto vars = params.bind(tape, true);
    tape.backward(build(tape, vars));
  }
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].value.size(); ++j) index.emplace_back(i, j);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(index.begin(), index.end(), rng);
  index.resize(std::min(coords, index.size()));

  Result r;
  for (const auto& [i, j] : index) {
    const double analytic = params[i].grad[j];
    const double saved = params[i].value[j];
    params[i].value[j] = saved + h;
    const double up = loss_value(params, build);
    params[i].value[j] = saved - h;
    const double down = loss_value(params, build);
    params[i].value[j] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / denom);
    ++r.checked;
  }
  return r;
}

inline TensorD normal_tensor(crossda::nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  TensorD t(shape);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

/// Adds a named parameter filled from N(0, scale^2).
inline std::size_t add_normal(ParamsD& ps, const std::string& name, crossda::nn::Shape shape, std::mt19937_64& rng,
                              double scale = 1.0) {
  const auto i = ps.add(name, shape);
  ps[i].value = normal_tensor(shape, rng, scale);
  return i;
}

}  // namespace gradcheck
