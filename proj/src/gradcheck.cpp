#include "cadsketch/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cadsketch/error.hpp"
#include "cadsketch/random.hpp"

namespace cadsketch::ad {

namespace {

double ulp(double v) {
  const float f = static_cast<float>(std::abs(v));
  return static_cast<double>(std::nextafter(f, std::numeric_limits<float>::infinity()) - f);
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& input,
                           const GradCheckOptions& options) {
  std::vector<float> analytic(input.size(), 0.0f);
  {
    Tape tape;
    Tensor x = input.clone();
    x.set_requires_grad(true);
    Tensor y = f(x);
    tape.backward(y);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }

  std::vector<std::size_t> coords(input.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates != 0 && options.max_coordinates < coords.size() && options.largest_first) {
    std::stable_sort(coords.begin(), coords.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(analytic[a]) > std::abs(analytic[b]); });
    coords.resize(options.max_coordinates);
  } else if (options.max_coordinates != 0 && options.max_coordinates < coords.size()) {
    RandomSource rng(options.seed);
    for (std::size_t i = 0; i < options.max_coordinates; ++i) {
      const int j = rng.uniform_int(static_cast<int>(i), static_cast<int>(coords.size()) - 1);
      std::swap(coords[i], coords[static_cast<std::size_t>(j)]);
    }
    coords.resize(options.max_coordinates);
  }

  double scale = 0.0;
  for (float g : analytic) scale = std::max(scale, options.scale_floor * std::abs(static_cast<double>(g)));

  GradCheckReport report;
  NoGradGuard no_grad;
  Tensor probe = input.clone();
  for (std::size_t i : coords) {
    const float original = probe.data()[i];
    // Divide by the step actually representable in float32.
    const float hi = static_cast<float>(original + options.eps);
    const float lo = static_cast<float>(original - options.eps);
    probe.data()[i] = hi;
    const double plus = f(probe).item();
    probe.data()[i] = lo;
    const double minus = f(probe).item();
    probe.data()[i] = original;
    const double step = static_cast<double>(hi) - lo;
    const double numeric = (plus - minus) / step;
    const double roundoff = (ulp(plus) + ulp(minus)) / step;
    const double a = analytic[i];
    const double err = std::abs(a - numeric);
    const double floor = std::max({options.abs_floor, scale, roundoff / options.tolerance});
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    report.max_gradient = std::max(report.max_gradient, std::abs(a));
    report.max_absolute_error = std::max(report.max_absolute_error, err);
    report.max_relative_error = std::max(report.max_relative_error, err / denom);
    ++report.coordinates;
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace cadsketch::ad
