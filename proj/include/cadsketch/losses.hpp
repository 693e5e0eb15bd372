#pragma once

#include <array>
#include <string>

#include "cadsketch/ops.hpp"
#include "cadsketch/tokens.hpp"

namespace cadsketch::nets {

using ad::Tensor;

enum class ImageLossKind { Bce, L2, MultiscaleL2 };

std::string to_string(ImageLossKind kind);
/// Accepts "bce", "l2", "multiscale_l2". Throws InvalidConfig otherwise.
ImageLossKind image_loss_from_string(const std::string& name);

/// Sum over the 5 pyramid levels of the per-level mean squared difference.
/// Inputs are [H, W] or [1, H, W] with H, W divisible by 16.
Tensor multiscale_l2(const Tensor& a, const Tensor& b);

Tensor image_loss(const Tensor& pred, const Tensor& target, ImageLossKind kind);

/// Slot permutation: perm[i] is the prediction slot assigned to target slot i.
using SlotPermutation = std::array<int, kMaxPrimitives>;

SlotPermutation identity_permutation();
/// Throws InvalidPermutation unless perm is a bijection over 0..15.
void check_permutation(const SlotPermutation& perm);

/// Mean over all 128 token positions of -log p(target token), with the
/// prediction rows of slot perm[i] scored against target slot i.
Tensor token_cross_entropy(const Tensor& probabilities, const TokenGrid& target, const SlotPermutation& perm);

}  // namespace cadsketch::nets
