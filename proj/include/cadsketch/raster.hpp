#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cadsketch/random.hpp"
#include "cadsketch/sketch.hpp"

namespace cadsketch {

inline constexpr int kDefaultImageSize = 128;
inline constexpr int kPyramidLevels = 5;

/// Row-major h x w raster with values in [0, 1]; foreground is 1.
struct SketchImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  SketchImage() = default;
  SketchImage(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return pixels.size(); }
  double mean() const;
  std::size_t foreground_count(float threshold = 0.5f) const;

  friend bool operator==(const SketchImage&, const SketchImage&) = default;
};

struct ImagePyramid {
  std::vector<SketchImage> levels;  // level s at index s-1, halved each step
};

/// Circle through three points plus the signed sweep from `start_angle`
/// (angle of the first point) to the third point passing through the second.
struct Circumcircle {
  Vec2 center;
  double radius = 0.0;
  double start_angle = 0.0;
  double sweep = 0.0;
};

/// std::nullopt signals collinear input (|cross(b-a, c-a)| < 1e-9).
std::optional<Circumcircle> circumcircle(Vec2 a, Vec2 b, Vec2 c);

/// Deterministic 1-px strokes. Normalized v maps to pixel v*(dim-1) with x
/// along columns and y along rows; points are 3x3 blocks.
SketchImage rasterize(const Sketch& sketch, int width = kDefaultImageSize, int height = kDefaultImageSize);

struct HanddrawConfig {
  double translation_sigma = 0.02;
  double rotation_sigma_deg = 3.0;
  double gp_lengthscale = 0.1;
  double gp_amplitude = 0.01;
  int points_per_stroke = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-primitive random rigid motion plus a smooth Gaussian-process
/// displacement along the stroke. Zero noise reproduces rasterize exactly.
SketchImage synthesize_handdrawn(const Sketch& sketch, const HanddrawConfig& cfg, int width = kDefaultImageSize,
                                 int height = kDefaultImageSize);

/// Five levels of repeated 2x2 mean pooling. Throws IndivisibleDims unless
/// both dims are divisible by 16.
ImagePyramid build_pyramid(const SketchImage& image);
SketchImage avg_pool2(const SketchImage& image);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const SketchImage& image);
SketchImage decode_pgm(std::string_view bytes);
void write_pgm(const SketchImage& image, const std::filesystem::path& path);
SketchImage read_pgm(const std::filesystem::path& path);

}  // namespace cadsketch
