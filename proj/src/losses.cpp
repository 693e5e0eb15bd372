#include "cadsketch/losses.hpp"

#include "cadsketch/error.hpp"
#include "cadsketch/nets.hpp"
#include "cadsketch/raster.hpp"

namespace cadsketch::nets {

std::string to_string(ImageLossKind kind) {
  switch (kind) {
    case ImageLossKind::Bce:
      return "bce";
    case ImageLossKind::L2:
      return "l2";
    case ImageLossKind::MultiscaleL2:
      return "multiscale_l2";
  }
  return "unknown";
}

ImageLossKind image_loss_from_string(const std::string& name) {
  if (name == "bce") return ImageLossKind::Bce;
  if (name == "l2") return ImageLossKind::L2;
  if (name == "multiscale_l2") return ImageLossKind::MultiscaleL2;
  throw Error(ErrorCode::InvalidConfig, "unknown image loss '" + name + "'");
}

Tensor multiscale_l2(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                "multiscale_l2: " + ad::shape_string(a.shape()) + " vs " + ad::shape_string(b.shape()));
  }
  if (a.dim(-1) % 16 != 0 || a.dim(-2) % 16 != 0) {
    throw Error(ErrorCode::IndivisibleDims, "multiscale_l2 needs dims divisible by 16, got " +
                                                ad::shape_string(a.shape()));
  }
  Tensor x = a;
  Tensor y = b;
  Tensor total = ad::mse(x, y);
  for (int s = 1; s < kPyramidLevels; ++s) {
    x = ad::avg_pool2(x);
    y = ad::avg_pool2(y);
    total = ad::add(total, ad::mse(x, y));
  }
  return total;
}

Tensor image_loss(const Tensor& pred, const Tensor& target, ImageLossKind kind) {
  switch (kind) {
    case ImageLossKind::Bce:
      return ad::binary_cross_entropy(pred, target);
    case ImageLossKind::L2:
      return ad::mse(pred, target);
    case ImageLossKind::MultiscaleL2:
      return multiscale_l2(pred, target);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown image loss");
}

SlotPermutation identity_permutation() {
  SlotPermutation p{};
  for (int i = 0; i < kMaxPrimitives; ++i) p[i] = i;
  return p;
}

void check_permutation(const SlotPermutation& perm) {
  std::array<bool, kMaxPrimitives> seen{};
  for (int i = 0; i < kMaxPrimitives; ++i) {
    const int j = perm[i];
    if (j < 0 || j >= kMaxPrimitives || seen[j]) {
      throw Error(ErrorCode::InvalidPermutation, "slot assignment is not a permutation of 0..15");
    }
    seen[j] = true;
  }
}

Tensor token_cross_entropy(const Tensor& probabilities, const TokenGrid& target, const SlotPermutation& perm) {
  check_permutation(perm);
  if (probabilities.rank() != 2 || probabilities.dim(0) != token::kSequenceLength ||
      probabilities.dim(1) != token::kVocabSize) {
    throw Error(ErrorCode::ShapeMismatch, "token_cross_entropy expects (128,73), got " +
                                              ad::shape_string(probabilities.shape()));
  }
  std::vector<int> rows(token::kSequenceLength);
  for (int i = 0; i < kMaxPrimitives; ++i) {
    for (int t = 0; t < token::kPerSlot; ++t) rows[i * token::kPerSlot + t] = perm[i] * token::kPerSlot + t;
  }
  return ad::cross_entropy(ad::select_rows(probabilities, rows), one_hot(target));
}

}  // namespace cadsketch::nets
