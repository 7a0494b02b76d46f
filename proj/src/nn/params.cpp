#include "crossda/nn/params.hpp"

#include <cmath>

#include "crossda/error.hpp"

namespace crossda::nn {

template <typename T>
std::size_t BasicParameterSet<T>::add(std::string name, Shape shape) {
  for (const auto& p : params_) {
    if (p.name == name) throw Error(Errc::invalid_argument, "duplicate parameter name " + name);
  }
  params_.emplace_back(std::move(name), BasicTensor<T>(shape));
  return params_.size() - 1;
}

template <typename T>
std::size_t BasicParameterSet<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
const BasicParameter<T>* BasicParameterSet<T>::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
void BasicParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void BasicParameterSet<T>::init_uniform(std::size_t i, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : params_.at(i).value.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
std::vector<Var> BasicParameterSet<T>::bind(BasicTape<T>& tape, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (auto& p : params_) vars.push_back(trainable ? tape.parameter(p) : tape.frozen(p));
  return vars;
}

template <typename T>
std::vector<Var> BasicParameterSet<T>::bind_frozen(BasicTape<T>& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.frozen(p));
  return vars;
}

template class BasicParameterSet<float>;
template class BasicParameterSet<double>;

}  // namespace crossda::nn
