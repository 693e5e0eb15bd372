#pragma once

#include <cstddef>

#include "cadsketch/losses.hpp"
#include "cadsketch/raster.hpp"
#include "cadsketch/tokens.hpp"

namespace cadsketch::eval {

struct TokenScore {
  double value = 0.0;
  std::size_t count = 0;  // T_Acc or T_MSE
};

/// Fraction of non-padding target tokens equal to the assigned prediction
/// token. A target with no tokens scores 1 (nothing to miss).
TokenScore metric_acc(const TokenGrid& pred, const TokenGrid& target, const nets::SlotPermutation& perm);

/// Mean squared token difference over target positions holding parameter
/// tokens (7..70). Zero when the target has none.
TokenScore metric_param_mse(const TokenGrid& pred, const TokenGrid& target, const nets::SlotPermutation& perm);

/// 1/2 MSE over target foreground (== 1) plus 1/2 MSE over all pixels. The
/// foreground term is 0 for an all-background target.
double metric_img_mse(const SketchImage& pred, const SketchImage& target);

struct ChamferResult {
  double value = 0.0;
  std::size_t pred_foreground = 0;
  std::size_t target_foreground = 0;
  /// True when exactly one side has no foreground; value is then w^2 + h^2.
  bool empty_foreground = false;
};

/// Bidirectional chamfer distance in squared pixels over all foreground
/// pixels (value > 0.5).
ChamferResult metric_chamfer(const SketchImage& pred, const SketchImage& target);

double chamfer_sentinel(int width, int height);

}  // namespace cadsketch::eval
