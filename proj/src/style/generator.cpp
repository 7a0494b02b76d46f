#include <random>
#include <string>

#include "crossda/dataset.hpp"
#include "crossda/error.hpp"
#include "crossda/style.hpp"

namespace crossda::style {

namespace {

using nn::Activation;
using nn::Shape;
using nn::Var;

constexpr std::size_t kStyleFeatures = 2 * kBands;
constexpr std::size_t kBottleneck = 128;
constexpr double kSigmaFloor = 0.01;

// Generator parameter slots.
enum : std::size_t {
  kE1W, kE1B, kE2W, kE2B, kE3W, kE3B,
  kMuW, kMuB, kSigmaW, kSigmaB,
  kD1W, kD1B, kD2W, kD2B, kD3W, kD3B,
  kSkipW, kSkipB,
  kGeneratorSlots
};

void add_conv(nn::ParameterSet& ps, const std::string& name, std::size_t co, std::size_t ci, std::size_t k,
              std::mt19937_64& rng) {
  const std::size_t fan_in = ci * k * k;
  ps.init_uniform(ps.add(name + ".w", Shape{co, ci, k, k}), fan_in, rng);
  ps.init_uniform(ps.add(name + ".b", Shape{co}), fan_in, rng);
}

void add_linear(nn::ParameterSet& ps, const std::string& name, std::size_t out, std::size_t in,
                std::mt19937_64& rng) {
  ps.init_uniform(ps.add(name + ".w", Shape{out, in}), in, rng);
  ps.init_uniform(ps.add(name + ".b", Shape{out}), in, rng);
}

}  // namespace

nn::ParameterSet make_generator(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParameterSet ps;
  add_conv(ps, "enc1", 32, kBands, 3, rng);
  add_conv(ps, "enc2", 64, 32, 3, rng);
  add_conv(ps, "enc3", kBottleneck, 64, 3, rng);
  add_linear(ps, "style_mu", kBottleneck, kStyleFeatures, rng);
  add_linear(ps, "style_sigma", kBottleneck, kStyleFeatures, rng);
  add_conv(ps, "dec1", 64, kBottleneck, 3, rng);
  add_conv(ps, "dec2", 32, 64, 3, rng);
  add_conv(ps, "dec3", kBands, 32, 3, rng);
  ps.add("skip.w", Shape{kBands, kBands, 1, 1});
  ps.add("skip.b", Shape{kBands});
  for (std::size_t c = 0; c < kBands; ++c) ps[kSkipW].value[c * kBands + c] = 1.0f;
  return ps;
}

nn::ParameterSet make_discriminator(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParameterSet ps;
  add_conv(ps, "conv1", 32, kBands, 3, rng);
  add_conv(ps, "conv2", 64, 32, 3, rng);
  add_conv(ps, "conv3", 128, 64, 3, rng);
  add_conv(ps, "conv4", 1, 128, 3, rng);
  return ps;
}

template <typename T>
nn::BasicTensor<T> style_tensor(const DomainStyle& style, std::size_t n) {
  if (style.bands() != kBands) {
    throw Error(Errc::dimension, "style has " + std::to_string(style.bands()) + " bands, expected 6");
  }
  nn::BasicTensor<T> t(Shape{n, kStyleFeatures});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < kBands; ++b) {
      t[i * kStyleFeatures + b] = static_cast<T>(style.mean[b]);
      t[i * kStyleFeatures + kBands + b] = static_cast<T>(style.std[b]);
    }
  }
  return t;
}

template <typename T>
Var generator_forward(nn::BasicTape<T>& tape, std::span<const Var> p, Var x, Var style, GeneratorTrace* trace) {
  if (p.size() != kGeneratorSlots) throw Error(Errc::dimension, "generator expects 18 parameter tensors");
  const auto& xs = tape.value(x).shape();
  if (xs.rank() != 4 || xs[1] != kBands || xs[2] % 8 != 0 || xs[3] % 8 != 0) {
    throw Error(Errc::dimension, "generator input must be [N,6,H,W] with H and W multiples of 8, got " + xs.str());
  }
  Var h = nn::activation(tape, nn::conv2d(tape, x, p[kE1W], p[kE1B], 2, 1), Activation::leaky_relu);
  h = nn::activation(tape, nn::conv2d(tape, h, p[kE2W], p[kE2B], 2, 1), Activation::leaky_relu);
  h = nn::activation(tape, nn::conv2d(tape, h, p[kE3W], p[kE3B], 2, 1), Activation::leaky_relu);

  const Var mu = nn::linear(tape, style, p[kMuW], p[kMuB]);
  const Var sigma = nn::affine_scalar(tape, nn::softplus(tape, nn::linear(tape, style, p[kSigmaW], p[kSigmaB])), 1.0,
                                      kSigmaFloor);
  h = nn::adain(tape, h, mu, sigma);
  if (trace) *trace = {h, mu, sigma};

  h = nn::activation(tape, nn::upsample_conv2d(tape, h, p[kD1W], p[kD1B]), Activation::relu);
  h = nn::activation(tape, nn::upsample_conv2d(tape, h, p[kD2W], p[kD2B]), Activation::relu);
  h = nn::upsample_conv2d(tape, h, p[kD3W], p[kD3B]);
  const Var skip = nn::conv2d(tape, x, p[kSkipW], p[kSkipB], 1, 0);
  return nn::activation(tape, nn::add(tape, h, skip), Activation::tanh);
}

template <typename T>
Var discriminator_forward(nn::BasicTape<T>& tape, std::span<const Var> p, Var x) {
  if (p.size() != 8) throw Error(Errc::dimension, "discriminator expects 8 parameter tensors");
  Var h = x;
  for (std::size_t layer = 0; layer < 4; ++layer) {
    h = nn::conv2d(tape, h, p[2 * layer], p[2 * layer + 1], 2, 1);
    h = nn::activation(tape, h, layer < 3 ? Activation::leaky_relu : Activation::sigmoid);
  }
  return h;
}

Raster generator_apply(const nn::ParameterSet& generator, const Raster& tile, const DomainStyle& style) {
  if (tile.dtype() != DType::F32) throw Error(Errc::dtype, "generator_apply expects an F32 tile");
  nn::Tape tape;
  const auto p = generator.bind_frozen(tape);
  const Var x = tape.constant(stack_tiles(std::span<const Raster>(&tile, 1)));
  const Var s = tape.constant(style_tensor<float>(style, 1));
  const Var y = generator_forward<float>(tape, p, x, s);
  return tile_from_tensor(tape.value(y), 0, tile);
}

template nn::BasicTensor<float> style_tensor<float>(const DomainStyle&, std::size_t);
template nn::BasicTensor<double> style_tensor<double>(const DomainStyle&, std::size_t);
template Var generator_forward<float>(nn::BasicTape<float>&, std::span<const Var>, Var, Var, GeneratorTrace*);
template Var generator_forward<double>(nn::BasicTape<double>&, std::span<const Var>, Var, Var, GeneratorTrace*);
template Var discriminator_forward<float>(nn::BasicTape<float>&, std::span<const Var>, Var);
template Var discriminator_forward<double>(nn::BasicTape<double>&, std::span<const Var>, Var);

}  // namespace crossda::style
