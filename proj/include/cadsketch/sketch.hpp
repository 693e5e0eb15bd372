#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace cadsketch {

inline constexpr int kMaxPrimitives = 16;

enum class PrimitiveKind { Arc, Circle, Line, Point };

std::string_view to_string(PrimitiveKind kind);
/// Number of real parameters stored for a kind (Line 4, Circle 3, Arc 6, Point 2).
int param_count(PrimitiveKind kind);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// One typed geometric entity in normalized units.
///
/// Parameter layout per kind:
///   Line   [xs, ys, xe, ye]
///   Circle [xc, yc, r]
///   Arc    [xs, ys, xm, ym, xe, ye]
///   Point  [xp, yp]
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Line;
  std::array<double, 6> params{};
  bool construction = false;

  static Primitive line(Vec2 start, Vec2 end, bool construction = false);
  static Primitive circle(Vec2 center, double radius, bool construction = false);
  static Primitive arc(Vec2 start, Vec2 mid, Vec2 end, bool construction = false);
  static Primitive point(Vec2 p, bool construction = false);

  std::span<const double> values() const { return {params.data(), static_cast<std::size_t>(param_count(kind))}; }
  std::span<double> values() { return {params.data(), static_cast<std::size_t>(param_count(kind))}; }

  /// True when parameter index i is a radius rather than a coordinate.
  bool is_radius(int i) const { return kind == PrimitiveKind::Circle && i == 2; }

  Vec2 start() const { return {params[0], params[1]}; }
  Vec2 end() const;
  Vec2 mid() const { return {params[2], params[3]}; }
  Vec2 center() const { return {params[0], params[1]}; }
  double radius() const { return params[2]; }

  friend bool operator==(const Primitive&, const Primitive&) = default;
};

struct Sketch {
  std::vector<Primitive> primitives;

  bool empty() const { return primitives.empty(); }
  std::size_t size() const { return primitives.size(); }

  friend bool operator==(const Sketch&, const Sketch&) = default;
};

/// Isotropic scale and translation of the sketch bounding box into
/// [margin, 1 - margin]^2, centered on both axes. Circles contribute their
/// full extent to the box; arcs contribute their control points.
Sketch normalize_sketch(const Sketch& sketch, double margin);

}  // namespace cadsketch
