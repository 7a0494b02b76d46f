#include "crossda/nn/tape.hpp"

#include "crossda/error.hpp"

namespace crossda::nn {

template <typename T>
const typename BasicTape<T>::Node& BasicTape<T>::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw Error(Errc::invalid_argument, "variable not on this tape");
  return nodes_[v.id];
}

template <typename T>
typename BasicTape<T>::Node& BasicTape<T>::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw Error(Errc::invalid_argument, "variable not on this tape");
  return nodes_[v.id];
}

template <typename T>
Var BasicTape<T>::constant(TensorT value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var BasicTape<T>::parameter(BasicParameter<T>& p) {
  if (p.grad.size() != p.value.size()) p.zero_grad();
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var BasicTape<T>::record(TensorT value, bool requires_grad, BackwardFn fn) {
#ifndef NDEBUG
  if (!value.all_finite()) throw Error(Errc::non_finite, "op produced a non-finite value");
#endif
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const typename BasicTape<T>::TensorT& BasicTape<T>::grad(Var v) {
  return grad_accumulator(v);
}

template <typename T>
typename BasicTape<T>::TensorT& BasicTape<T>::grad_accumulator(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = TensorT(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void BasicTape<T>::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw Error(Errc::invalid_argument, "backward needs a scalar loss, got shape " + root.value.shape().str());
  }
  grad_accumulator(loss)[0] = T{1};
  visited_ = 0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    ++visited_;
    if (n.param != nullptr) {
      auto dst = n.param->grad.values();
      const auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (n.backward) {
      n.backward(*this, Var{static_cast<std::uint32_t>(i)});
    }
  }
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace crossda::nn
