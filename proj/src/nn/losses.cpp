#include "crossda/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "crossda/error.hpp"

namespace crossda::nn {

namespace {

template <typename T>
void require_probabilities(const BasicTensor<T>& d, const char* what) {
  if (d.size() == 0) throw Error(Errc::empty_input, std::string(what) + " is empty");
  for (T v : d.values()) {
    if (!std::isfinite(v)) throw Error(Errc::non_finite, std::string(what) + " contains a non-finite score");
    if (!(v > T{0} && v < T{1})) {
      throw Error(Errc::range, std::string(what) + " score " + std::to_string(v) + " outside (0, 1)");
    }
  }
}

}  // namespace

template <typename T>
Var discriminator_loss(BasicTape<T>& tape, Var rv, Var fv) {
  const auto& real = tape.value(rv);
  const auto& fake = tape.value(fv);
  require_probabilities(real, "d_real");
  require_probabilities(fake, "d_fake");
  double lr = 0.0, lf = 0.0;
  for (T v : real.values()) lr += std::log(static_cast<double>(v));
  for (T v : fake.values()) lf += std::log1p(-static_cast<double>(v));
  const double nr = static_cast<double>(real.size());
  const double nf = static_cast<double>(fake.size());
  BasicTensor<T> out(Shape{1}, static_cast<T>(-(lr / nr + lf / nf)));
  const bool needs = tape.requires_grad(rv) || tape.requires_grad(fv);
  return tape.record(std::move(out), needs, [rv, fv, nr, nf](BasicTape<T>& t, Var self) {
    const double g = t.grad(self)[0];
    if (t.requires_grad(rv)) {
      const auto& real = t.value(rv);
      auto& gr = t.grad_accumulator(rv);
      for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += static_cast<T>(-g / (nr * real[i]));
    }
    if (t.requires_grad(fv)) {
      const auto& fake = t.value(fv);
      auto& gf = t.grad_accumulator(fv);
      for (std::size_t i = 0; i < gf.size(); ++i) gf[i] += static_cast<T>(g / (nf * (1.0 - fake[i])));
    }
  });
}

template <typename T>
Var generator_loss(BasicTape<T>& tape, Var fv) {
  const auto& fake = tape.value(fv);
  require_probabilities(fake, "d_fake");
  double lf = 0.0;
  for (T v : fake.values()) lf += std::log(static_cast<double>(v));
  const double nf = static_cast<double>(fake.size());
  BasicTensor<T> out(Shape{1}, static_cast<T>(-lf / nf));
  return tape.record(std::move(out), tape.requires_grad(fv), [fv, nf](BasicTape<T>& t, Var self) {
    const double g = t.grad(self)[0];
    const auto& fake = t.value(fv);
    auto& gf = t.grad_accumulator(fv);
    for (std::size_t i = 0; i < gf.size(); ++i) gf[i] += static_cast<T>(-g / (nf * fake[i]));
  });
}

template <typename T>
GanTerms gan_terms(BasicTape<T>& tape, Var rv, Var fv) {
  GanTerms terms;
  terms.loss_d = discriminator_loss(tape, rv, fv);
  terms.loss_g = generator_loss(tape, fv);
  terms.eq1 = -static_cast<double>(tape.value(terms.loss_d)[0]);
  const auto& real = tape.value(rv);
  const auto& fake = tape.value(fv);
  const auto hits_real = std::count_if(real.values().begin(), real.values().end(), [](T v) { return v > T{0.5}; });
  const auto hits_fake = std::count_if(fake.values().begin(), fake.values().end(), [](T v) { return v < T{0.5}; });
  terms.accuracy = 0.5 * (static_cast<double>(hits_real) / static_cast<double>(real.size()) +
                          static_cast<double>(hits_fake) / static_cast<double>(fake.size()));
  return terms;
}

template <typename T>
Var softmax_xent(BasicTape<T>& tape, Var lv, std::span<const std::uint8_t> targets, std::uint8_t ignore_code) {
  const auto& logits = tape.value(lv);
  if (logits.shape().rank() != 4) throw Error(Errc::dimension, "softmax_xent: logits must be [N,K,H,W]");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  const std::size_t hw = logits.shape()[2] * logits.shape()[3];
  if (targets.size() != n * hw) {
    throw Error(Errc::dimension, "softmax_xent: expected " + std::to_string(n * hw) + " targets, got " +
                                     std::to_string(targets.size()));
  }

  // Softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(n * k * hw, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::uint8_t target = targets[s * hw + p];
      if (target == ignore_code) continue;
      if (target >= k) {
        throw Error(Errc::range, "softmax_xent: target " + std::to_string(target) + " outside [0, " +
                                     std::to_string(k) + ")");
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits[(s * k + c) * hw + p]));
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(logits[(s * k + c) * hw + p]) - mx);
      const double log_z = mx + std::log(z);
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t i = (s * k + c) * hw + p;
        (*probs)[i] = std::exp(static_cast<double>(logits[i]) - log_z);
      }
      total += log_z - static_cast<double>(logits[(s * k + target) * hw + p]);
      ++counted;
    }
  }
  if (counted == 0) throw Error(Errc::empty_input, "softmax_xent: every pixel is ignored");

  const double count = static_cast<double>(counted);
  BasicTensor<T> out(Shape{1}, static_cast<T>(total / count));
  std::vector<std::uint8_t> tgt(targets.begin(), targets.end());
  return tape.record(std::move(out), tape.requires_grad(lv),
                     [lv, probs, tgt = std::move(tgt), n, k, hw, count, ignore_code](BasicTape<T>& t, Var self) {
                       const double g = t.grad(self)[0] / count;
                       auto& gl = t.grad_accumulator(lv);
                       for (std::size_t s = 0; s < n; ++s) {
                         for (std::size_t p = 0; p < hw; ++p) {
                           const std::uint8_t target = tgt[s * hw + p];
                           if (target == ignore_code) continue;
                           for (std::size_t c = 0; c < k; ++c) {
                             const std::size_t i = (s * k + c) * hw + p;
                             const double indicator = c == target ? 1.0 : 0.0;
                             gl[i] += static_cast<T>(g * ((*probs)[i] - indicator));
                           }
                         }
                       }
                     });
}

#define CROSSDA_INSTANTIATE_LOSSES(T)                                                          \
  template GanTerms gan_terms<T>(BasicTape<T>&, Var, Var);                                      \
  template Var discriminator_loss<T>(BasicTape<T>&, Var, Var);                                  \
  template Var generator_loss<T>(BasicTape<T>&, Var);                                           \
  template Var softmax_xent<T>(BasicTape<T>&, Var, std::span<const std::uint8_t>, std::uint8_t);

CROSSDA_INSTANTIATE_LOSSES(float)
CROSSDA_INSTANTIATE_LOSSES(double)

#undef CROSSDA_INSTANTIATE_LOSSES

}  // namespace crossda::nn
