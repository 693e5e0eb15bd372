#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cadsketch/gradcheck.hpp"
#include "cadsketch/nets.hpp"

namespace cadsketch {

struct OpGradResult {
  std::string name;
  ad::GradCheckReport report;
};

/// Finite-difference check of every differentiable op (and each of its
/// differentiable inputs) on seeded random inputs of shape <= (4, 8, 8).
std::vector<OpGradResult> op_gradient_suite(std::uint64_t seed, const ad::GradCheckOptions& options = {});

/// Gradient of multiscale_l2(srn(y), X) with respect to the token
/// probabilities y, with the renderer frozen; checks `coordinates` entries.
OpGradResult render_path_gradient(nets::SketchRenderer& srn, std::uint64_t seed, std::size_t coordinates = 20,
                                  const ad::GradCheckOptions& options = {});

/// Renderer fitted for `steps` full-batch steps on 10 generated sketches.
/// Gradients of an untrained renderer sit near float32 roundoff, so the
/// render-path check runs against a fitted one.
nets::SketchRenderer fitted_renderer(const nets::SrnConfig& config, std::uint64_t seed, int steps = 300);

}  // namespace cadsketch
