#pragma once

#include <cstdint>
#include <functional>

#include "cadsketch/tensor.hpp"

namespace cadsketch::ad {

struct GradCheckOptions {
  double eps = 1e-3;
  double tolerance = 1e-2;
  /// Check at most this many coordinates (seeded sample); 0 checks all.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Errors are relative to max(|analytic|, |numeric|, floor). The floor is
  /// the largest of abs_floor, scale_floor * max|analytic| over all
  /// coordinates, and roundoff / tolerance, where roundoff is the difference
  /// error caused by storing f(x +- eps) in float32.
  double abs_floor = 1e-6;
  double scale_floor = 0.1;
  /// Check the coordinates with the largest analytic gradients instead of a
  /// random subset (only with max_coordinates).
  bool largest_first = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates = 0;
  /// Largest analytic gradient magnitude among the checked coordinates.
  double max_gradient = 0.0;
  bool passed = true;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `f` must be a pure function of its argument.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& input,
                           const GradCheckOptions& options = {});

}  // namespace cadsketch::ad
