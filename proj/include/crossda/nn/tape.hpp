#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>

#include "crossda/nn/tensor.hpp"

namespace crossda::nn {

/// Handle to a value recorded on a tape.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;

  bool valid() const noexcept { return id != kInvalid; }
};

/// A learnable tensor. `grad` has the shape of `value` and accumulates over
/// backward passes until cleared.
template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }
};

using Parameter = BasicParameter<float>;

/// Reverse-mode differentiation record.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction; `backward` walks it once from the loss down to
/// the first node. A tape is single-use and not thread-safe.
template <typename T>
class BasicTape {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(BasicTape&, Var)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var constant(TensorT value);
  /// Gradients reaching this node are added to `p.grad` by `backward`.
  Var parameter(BasicParameter<T>& p);
  /// The parameter participates as a constant; its gradient is not formed.
  Var frozen(const BasicParameter<T>& p) { return constant(p.value); }

  /// Appends an op result. `fn` is kept only when `requires_grad` is set.
  Var record(TensorT value, bool requires_grad, BackwardFn fn);

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const TensorT& value(Var v) const { return node(v).value; }
  /// Accumulated gradient; a zero tensor when the node was never reached.
  const TensorT& grad(Var v);
  /// Gradient buffer of `v`, allocated on first use. Ops call this from
  /// their backward functions.
  TensorT& grad_accumulator(Var v);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a
  /// gradient. Throws when `loss` is not a single element.
  void backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  /// Nodes whose backward function ran during the last `backward` call.
  std::size_t visited_count() const noexcept { return visited_; }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    BasicParameter<T>* param = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::deque<Node> nodes_;
  std::size_t visited_ = 0;
};

using Tape = BasicTape<float>;

}  // namespace crossda::nn
