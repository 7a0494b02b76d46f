#pragma once

#include <cstdint>
#include <span>

#include "crossda/nn/tape.hpp"

namespace crossda::nn {

/// Adversarial objective terms for one discriminator/generator pair.
///
/// `eq1` is the value E[log D(real)] + E[log(1 - D(fake))] that the
/// discriminator ascends. `loss_d` is its negation; `loss_g` is the
/// non-saturating generator loss -E[log D(fake)].
struct GanTerms {
  Var loss_d;
  Var loss_g;
  double eq1 = 0.0;
  /// Fraction of real scores above 0.5 and fake scores below 0.5, averaged
  /// over the two sets.
  double accuracy = 0.0;
};

/// Both inputs must be finite and strictly inside (0, 1).
template <typename T>
GanTerms gan_terms(BasicTape<T>& tape, Var d_real, Var d_fake);

/// -E[log d_real] - E[log(1 - d_fake)].
template <typename T>
Var discriminator_loss(BasicTape<T>& tape, Var d_real, Var d_fake);

/// -E[log d_fake].
template <typename T>
Var generator_loss(BasicTape<T>& tape, Var d_fake);

/// Mean per-pixel cross-entropy of logits [N,K,H,W] against targets laid out
/// as N*H*W class indices. Pixels equal to `ignore_code` are skipped.
template <typename T>
Var softmax_xent(BasicTape<T>& tape, Var logits, std::span<const std::uint8_t> targets,
                 std::uint8_t ignore_code = 255);

}  // namespace crossda::nn
