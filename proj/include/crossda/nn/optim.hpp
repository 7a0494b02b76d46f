#pragma once

#include <cstdint>
#include <vector>

#include "crossda/nn/params.hpp"

namespace crossda::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Classic L2: weight_decay * theta is added to the gradient.
  double weight_decay = 0.0;
};

/// Moments for every parameter of one set, in set order.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One bias-corrected Adam update of every parameter in `params` using the
/// gradients they hold. `lr` overrides config.lr for this step.
template <typename T>
void adam_step(BasicParameterSet<T>& params, AdamState& state, double lr);

struct PolySchedule {
  double base_lr = 1e-4;
  std::int64_t total_steps = 1;
  double power = 0.9;
};

/// base_lr * (1 - step / total_steps)^power for 0 <= step <= total_steps.
double poly_lr(const PolySchedule& schedule, std::int64_t step);

}  // namespace crossda::nn
