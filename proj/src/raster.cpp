#include "cadsketch/raster.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Upper bound on the distance between consecutive curve samples, in pixels.
constexpr double kCurveStep = 0.5;

// Position along a stroke in pixel space; u is normalized arclength in [0, 1].
struct StrokeSample {
  double x;
  double y;
  double u;
};

struct PixelMap {
  double sx;
  double sy;
  double col(double x) const { return x * sx; }
  double row(double y) const { return y * sy; }
};

long round_px(double v) { return std::lround(v); }

void plot(SketchImage& img, long col, long row) {
  if (col < 0 || row < 0 || col >= img.width || row >= img.height) return;
  img.at(static_cast<int>(row), static_cast<int>(col)) = 1.0f;
}

template <typename Emit>
void bresenham(long x0, long y0, long x1, long y1, Emit&& emit) {
  const long dx = std::abs(x1 - x0);
  const long dy = -std::abs(y1 - y0);
  const long step_x = x0 < x1 ? 1 : -1;
  const long step_y = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    emit(x0, y0);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += step_x;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += step_y;
    }
  }
}

std::vector<StrokeSample> trace_line(Vec2 a, Vec2 b, const PixelMap& map) {
  std::vector<StrokeSample> out;
  bresenham(round_px(map.col(a.x)), round_px(map.row(a.y)), round_px(map.col(b.x)), round_px(map.row(b.y)),
            [&](long c, long r) { out.push_back({static_cast<double>(c), static_cast<double>(r), 0.0}); });
  const double last = static_cast<double>(std::max<std::size_t>(out.size(), 2) - 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].u = static_cast<double>(i) / last;
  return out;
}

// Quadrant-mirrored sampling keeps the rendering symmetric about the center.
std::vector<StrokeSample> trace_circle(Vec2 c, double r, const PixelMap& map) {
  const double cx = map.col(c.x);
  const double cy = map.row(c.y);
  const double rx = r * map.sx;
  const double ry = r * map.sy;
  const int quarter = std::max(2, static_cast<int>(std::ceil(0.25 * kTwoPi * std::max(rx, ry) / kCurveStep)));
  std::vector<double> dx(quarter);
  std::vector<double> dy(quarter);
  for (int k = 0; k < quarter; ++k) {
    const double theta = (k + 0.5) * (0.5 * std::numbers::pi) / quarter;
    dx[k] = rx * std::cos(theta);
    dy[k] = ry * std::sin(theta);
  }
  std::vector<StrokeSample> out;
  out.reserve(4 * static_cast<std::size_t>(quarter));
  for (int k = 0; k < quarter; ++k) out.push_back({cx + dx[k], cy + dy[k], 0.0});
  for (int k = quarter - 1; k >= 0; --k) out.push_back({cx - dx[k], cy + dy[k], 0.0});
  for (int k = 0; k < quarter; ++k) out.push_back({cx - dx[k], cy - dy[k], 0.0});
  for (int k = quarter - 1; k >= 0; --k) out.push_back({cx + dx[k], cy - dy[k], 0.0});
  const double n = static_cast<double>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].u = static_cast<double>(i) / n;
  return out;
}

std::vector<StrokeSample> trace_arc(Vec2 a, Vec2 m, Vec2 b, const PixelMap& map) {
  const auto circle = circumcircle(a, m, b);
  if (!circle) return trace_line(a, b, map);
  const double length_px = std::abs(circle->sweep) * circle->radius * std::max(map.sx, map.sy);
  const int segments = std::max(2, static_cast<int>(std::ceil(length_px / kCurveStep)));
  std::vector<StrokeSample> out;
  out.reserve(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i <= segments; ++i) {
    const double t = static_cast<double>(i) / segments;
    Vec2 p;
    if (i == 0) {
      p = a;
    } else if (i == segments) {
      p = b;
    } else {
      const double theta = circle->start_angle + circle->sweep * t;
      p = {circle->center.x + circle->radius * std::cos(theta), circle->center.y + circle->radius * std::sin(theta)};
    }
    out.push_back({map.col(p.x), map.row(p.y), t});
  }
  return out;
}

std::vector<StrokeSample> trace_primitive(const Primitive& p, const PixelMap& map) {
  switch (p.kind) {
    case PrimitiveKind::Line: return trace_line(p.start(), p.end(), map);
    case PrimitiveKind::Circle: return trace_circle(p.center(), p.radius(), map);
    case PrimitiveKind::Arc: return trace_arc(p.start(), p.mid(), p.end(), map);
    case PrimitiveKind::Point: return {{map.col(p.params[0]), map.row(p.params[1]), 0.0}};
  }
  return {};
}

void plot_point_glyph(SketchImage& img, long col, long row) {
  for (long dr = -1; dr <= 1; ++dr) {
    for (long dc = -1; dc <= 1; ++dc) plot(img, col + dc, row + dr);
  }
}

PixelMap pixel_map(int width, int height) {
  return {static_cast<double>(width - 1), static_cast<double>(height - 1)};
}

Vec2 rotate_about(Vec2 p, Vec2 pivot, double c, double s) {
  const double x = p.x - pivot.x;
  const double y = p.y - pivot.y;
  return {pivot.x + c * x - s * y, pivot.y + s * x + c * y};
}

Primitive rigid_perturb(const Primitive& p, double tx, double ty, double angle_rad) {
  Primitive out = p;
  auto v = out.values();
  if (angle_rad != 0.0 && p.kind != PrimitiveKind::Circle && p.kind != PrimitiveKind::Point) {
    Vec2 pivot;
    const int points = static_cast<int>(v.size()) / 2;
    for (int i = 0; i < points; ++i) {
      pivot.x += v[2 * i] / points;
      pivot.y += v[2 * i + 1] / points;
    }
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    for (int i = 0; i < points; ++i) {
      const Vec2 q = rotate_about({v[2 * i], v[2 * i + 1]}, pivot, c, s);
      v[2 * i] = q.x;
      v[2 * i + 1] = q.y;
    }
  }
  for (std::size_t i = 0; i + 1 < v.size(); i += 2) {
    if (p.is_radius(static_cast<int>(i))) continue;
    v[i] += tx;
    v[i + 1] += ty;
  }
  return out;
}

// Lower Cholesky factor of the unit-amplitude squared-exponential kernel.
Eigen::MatrixXd gp_factor(int points, double lengthscale) {
  Eigen::MatrixXd k(points, points);
  const double l = std::max(lengthscale, 1e-6);
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const double d = (i - j) / static_cast<double>(points - 1);
      k(i, j) = std::exp(-d * d / (2.0 * l * l));
    }
    k(i, i) += 1e-6;
  }
  return Eigen::MatrixXd(k.llt().matrixL());
}

double interpolate(const Eigen::VectorXd& nodes, double u) {
  const int n = static_cast<int>(nodes.size());
  const double pos = std::clamp(u, 0.0, 1.0) * (n - 1);
  const int i = std::min(static_cast<int>(pos), n - 2);
  const double t = pos - i;
  return nodes[i] * (1.0 - t) + nodes[i + 1] * t;
}

}  // namespace

double SketchImage::mean() const {
  double sum = 0.0;
  for (float v : pixels) sum += v;
  return pixels.empty() ? 0.0 : sum / static_cast<double>(pixels.size());
}

std::size_t SketchImage::foreground_count(float threshold) const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [&](float v) { return v >= threshold; }));
}

std::optional<Circumcircle> circumcircle(Vec2 a, Vec2 b, Vec2 c) {
  const double bx = b.x - a.x;
  const double by = b.y - a.y;
  const double cx = c.x - a.x;
  const double cy = c.y - a.y;
  const double cross = bx * cy - by * cx;
  if (std::abs(cross) < 1e-9) return std::nullopt;
  const double b2 = bx * bx + by * by;
  const double c2 = cx * cx + cy * cy;
  const double ux = (cy * b2 - by * c2) / (2.0 * cross);
  const double uy = (bx * c2 - cx * b2) / (2.0 * cross);

  Circumcircle out;
  out.center = {a.x + ux, a.y + uy};
  out.radius = std::hypot(ux, uy);
  const auto angle = [&](Vec2 p) { return std::atan2(p.y - out.center.y, p.x - out.center.x); };
  const auto wrap = [](double t) {
    t = std::fmod(t, kTwoPi);
    return t < 0.0 ? t + kTwoPi : t;
  };
  out.start_angle = angle(a);
  const double to_end = wrap(angle(c) - out.start_angle);
  const double to_mid = wrap(angle(b) - out.start_angle);
  out.sweep = to_mid < to_end ? to_end : to_end - kTwoPi;
  return out;
}

SketchImage rasterize(const Sketch& sketch, int width, int height) {
  SketchImage img(width, height);
  const PixelMap map = pixel_map(width, height);
  for (const auto& p : sketch.primitives) {
    for (const auto& s : trace_primitive(p, map)) {
      if (p.kind == PrimitiveKind::Point) {
        plot_point_glyph(img, round_px(s.x), round_px(s.y));
      } else {
        plot(img, round_px(s.x), round_px(s.y));
      }
    }
  }
  return img;
}

void HanddrawConfig::validate() const {
  if (translation_sigma < 0 || rotation_sigma_deg < 0 || gp_lengthscale < 0 || gp_amplitude < 0) {
    throw Error(ErrorCode::InvalidConfig, "hand-draw sigmas must be non-negative");
  }
  if (points_per_stroke < 2) throw Error(ErrorCode::InvalidConfig, "points_per_stroke must be at least 2");
}

SketchImage synthesize_handdrawn(const Sketch& sketch, const HanddrawConfig& cfg, int width, int height) {
  cfg.validate();
  SketchImage img(width, height);
  const PixelMap map = pixel_map(width, height);
  const Eigen::MatrixXd factor = gp_factor(cfg.points_per_stroke, cfg.gp_lengthscale);
  RandomSource rng(cfg.seed);

  for (const auto& p : sketch.primitives) {
    const double tx = cfg.translation_sigma * rng.normal();
    const double ty = cfg.translation_sigma * rng.normal();
    const double angle = cfg.rotation_sigma_deg * rng.normal() * std::numbers::pi / 180.0;
    Eigen::VectorXd zx(cfg.points_per_stroke);
    Eigen::VectorXd zy(cfg.points_per_stroke);
    for (int i = 0; i < cfg.points_per_stroke; ++i) zx[i] = rng.normal();
    for (int i = 0; i < cfg.points_per_stroke; ++i) zy[i] = rng.normal();
    const Eigen::VectorXd gx = cfg.gp_amplitude * (factor * zx);
    const Eigen::VectorXd gy = cfg.gp_amplitude * (factor * zy);

    const Primitive moved = rigid_perturb(p, tx, ty, angle);
    bool have_prev = false;
    long prev_c = 0;
    long prev_r = 0;
    for (const auto& s : trace_primitive(moved, map)) {
      const long c = round_px(s.x + map.col(interpolate(gx, s.u)));
      const long r = round_px(s.y + map.row(interpolate(gy, s.u)));
      if (moved.kind == PrimitiveKind::Point) {
        plot_point_glyph(img, c, r);
        continue;
      }
      if (have_prev && (std::abs(c - prev_c) > 1 || std::abs(r - prev_r) > 1)) {
        bresenham(prev_c, prev_r, c, r, [&](long x, long y) { plot(img, x, y); });
      } else {
        plot(img, c, r);
      }
      have_prev = true;
      prev_c = c;
      prev_r = r;
    }
  }
  return img;
}

SketchImage avg_pool2(const SketchImage& image) {
  SketchImage out(image.width / 2, image.height / 2);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      out.at(r, c) = 0.25f * (image.at(2 * r, 2 * c) + image.at(2 * r, 2 * c + 1) + image.at(2 * r + 1, 2 * c) +
                              image.at(2 * r + 1, 2 * c + 1));
    }
  }
  return out;
}

ImagePyramid build_pyramid(const SketchImage& image) {
  constexpr int divisor = 1 << (kPyramidLevels - 1);
  if (image.width % divisor != 0 || image.height % divisor != 0 || image.width == 0 || image.height == 0) {
    throw Error(ErrorCode::IndivisibleDims, std::to_string(image.width) + "x" + std::to_string(image.height) +
                                                " is not divisible by " + std::to_string(divisor));
  }
  ImagePyramid pyramid;
  pyramid.levels.push_back(image);
  for (int s = 1; s < kPyramidLevels; ++s) pyramid.levels.push_back(avg_pool2(pyramid.levels.back()));
  return pyramid;
}

std::string encode_pgm(const SketchImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (float v : image.pixels) {
    const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

SketchImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  const auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto read_int = [&]() -> long {
    skip_space();
    long value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])) && digits < 9) {
      value = value * 10 + (bytes[pos] - '0');
      ++pos;
      ++digits;
    }
    if (digits == 0) throw Error(ErrorCode::MalformedHeader, "expected an integer in the PGM header");
    return value;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error(ErrorCode::MalformedHeader, "missing P5 magic");
  pos = 2;
  const long width = read_int();
  const long height = read_int();
  const long maxval = read_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::MalformedHeader, "unsupported PGM dimensions or maxval");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorCode::MalformedHeader, "missing whitespace after maxval");
  }
  ++pos;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < count) {
    throw Error(ErrorCode::IoError, "short read: expected " + std::to_string(count) + " pixel bytes");
  }
  SketchImage img(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < count; ++i) {
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<float>(maxval);
  }
  return img;
}

void write_pgm(const SketchImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(image));
}

SketchImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

}  // namespace cadsketch
