#include "crossda/nn/optim.hpp"

#include <cmath>
#include <string>

#include "crossda/error.hpp"

namespace crossda::nn {

template <typename T>
void adam_step(BasicParameterSet<T>& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(Errc::dimension, "optimizer state has " + std::to_string(state.m.size()) +
                                     " slots for " + std::to_string(params.size()) + " parameters");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.value.size() || p.grad.size() != p.value.size()) {
      throw Error(Errc::dimension, "optimizer slot shape mismatch for " + p.name);
    }
    auto theta = p.value.values();
    const auto grad = p.grad.values();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double g = static_cast<double>(grad[k]) + c.weight_decay * static_cast<double>(theta[k]);
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      theta[k] = static_cast<T>(static_cast<double>(theta[k]) - lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
}

double poly_lr(const PolySchedule& schedule, std::int64_t step) {
  if (schedule.total_steps <= 0 || schedule.power <= 0.0) {
    throw Error(Errc::invalid_argument, "poly schedule needs total_steps > 0 and power > 0");
  }
  if (step < 0 || step > schedule.total_steps) {
    throw Error(Errc::range, "step " + std::to_string(step) + " outside [0, " +
                                 std::to_string(schedule.total_steps) + "]");
  }
  const double remaining = 1.0 - static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return schedule.base_lr * std::pow(remaining, schedule.power);
}

template void adam_step<float>(BasicParameterSet<float>&, AdamState&, double);
template void adam_step<double>(BasicParameterSet<double>&, AdamState&, double);

}  // namespace crossda::nn
