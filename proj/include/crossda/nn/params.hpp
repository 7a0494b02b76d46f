#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "crossda/nn/tape.hpp"

namespace crossda::nn {

/// Ordered, named collection of learnable tensors for one network.
///
/// Addresses of the contained parameters are bound into tapes, so a set must
/// not be resized while a tape that references it is alive.
template <typename T>
class BasicParameterSet {
 public:
  std::size_t add(std::string name, Shape shape);

  BasicParameter<T>& operator[](std::size_t i) { return params_[i]; }
  const BasicParameter<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  const BasicParameter<T>* find(std::string_view name) const;

  void zero_grad();

  /// Fills parameter `i` from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init_uniform(std::size_t i, std::size_t fan_in, std::mt19937_64& rng);

  /// Puts every parameter on the tape, as a trainable leaf or as a constant.
  std::vector<Var> bind(BasicTape<T>& tape, bool trainable);
  std::vector<Var> bind_frozen(BasicTape<T>& tape) const;

  template <typename U>
  BasicParameterSet<U> cast() const {
    BasicParameterSet<U> out;
    for (const auto& p : params_) {
      const auto i = out.add(p.name, p.value.shape());
      out[i].value = p.value.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<BasicParameter<T>> params_;
};

using ParameterSet = BasicParameterSet<float>;

}  // namespace crossda::nn
