#pragma once

#include <cstdint>
#include <span>

#include "crossda/nn/tape.hpp"

namespace crossda::nn {

enum class Activation { relu, leaky_relu, sigmoid, tanh };

inline constexpr double kLeakySlope = 0.2;
/// Stabilizer added to the variance inside instance statistics.
inline constexpr double kInstanceEps = 1e-5;

/// Cross-correlation of x [N,Ci,H,W] with w [Co,Ci,k,k] plus bias b [Co].
/// Output spatial size is floor((H + 2*pad - k) / stride) + 1.
template <typename T>
Var conv2d(BasicTape<T>& tape, Var x, Var w, Var b, std::size_t stride, std::size_t pad);

/// Nearest-neighbour 2x upsampling of a rank-4 tensor.
template <typename T>
Var upsample2x(BasicTape<T>& tape, Var x);

/// Equal to conv2d(upsample2x(x), w, b, 1, 1) for a 3x3 kernel, computed on
/// the low-resolution grid.
template <typename T>
Var upsample_conv2d(BasicTape<T>& tape, Var x, Var w, Var b);

/// Elementwise activation. Sigmoid output is clamped to
/// [epsilon, 1 - epsilon] of T so that logarithms of it stay finite.

template <typename T>
Var activation(BasicTape<T>& tape, Var x, Activation kind);

template <typename T>
Var add(BasicTape<T>& tape, Var a, Var b);

/// y = scale * x + shift.
template <typename T>
Var affine_scalar(BasicTape<T>& tape, Var x, double scale, double shift);

template <typename T>
Var softplus(BasicTape<T>& tape, Var x);

/// x [N,F], w [O,F], b [O] -> [N,O].
template <typename T>
Var linear(BasicTape<T>& tape, Var x, Var w, Var b);

struct InstanceStats {
  Var mu;     // [N,C]
  Var sigma;  // [N,C], sqrt(population variance + kInstanceEps)
};

template <typename T>
InstanceStats instance_stats(BasicTape<T>& tape, Var x);

/// Adaptive instance normalization of `content` [N,C,H,W] to the per-sample,
/// per-channel statistics (style_mu, style_sigma), each [N,C].
///
/// The output is mu_s + sqrt(max(sigma_s^2 - eps, 0)) * (x - mu_x) / std_x,
/// which makes `instance_stats` of the output return (mu_s, sigma_s) exactly
/// whenever sigma_s^2 > eps and the content channel is not constant.
/// A constant content channel maps to mu_s.
template <typename T>
Var adain(BasicTape<T>& tape, Var content, Var style_mu, Var style_sigma);

template <typename T>
Var sum(BasicTape<T>& tape, Var x);

template <typename T>
Var mean(BasicTape<T>& tape, Var x);

/// sum_i x_i * weights_i, a scalar.
template <typename T>
Var dot(BasicTape<T>& tape, Var x, const BasicTensor<T>& weights);

}  // namespace crossda::nn
