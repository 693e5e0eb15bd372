#include "cadsketch/sketch.hpp"

#include <algorithm>
#include <limits>

#include "cadsketch/error.hpp"

namespace cadsketch {

std::string_view to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Arc: return "arc";
    case PrimitiveKind::Circle: return "circle";
    case PrimitiveKind::Line: return "line";
    case PrimitiveKind::Point: return "point";
  }
  return "unknown";
}

int param_count(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Arc: return 6;
    case PrimitiveKind::Circle: return 3;
    case PrimitiveKind::Line: return 4;
    case PrimitiveKind::Point: return 2;
  }
  return 0;
}

Primitive Primitive::line(Vec2 start, Vec2 end, bool construction) {
  return {PrimitiveKind::Line, {start.x, start.y, end.x, end.y, 0.0, 0.0}, construction};
}

Primitive Primitive::circle(Vec2 center, double radius, bool construction) {
  return {PrimitiveKind::Circle, {center.x, center.y, radius, 0.0, 0.0, 0.0}, construction};
}

Primitive Primitive::arc(Vec2 start, Vec2 mid, Vec2 end, bool construction) {
  return {PrimitiveKind::Arc, {start.x, start.y, mid.x, mid.y, end.x, end.y}, construction};
}

Primitive Primitive::point(Vec2 p, bool construction) {
  return {PrimitiveKind::Point, {p.x, p.y, 0.0, 0.0, 0.0, 0.0}, construction};
}

Vec2 Primitive::end() const {
  if (kind == PrimitiveKind::Arc) return {params[4], params[5]};
  return {params[2], params[3]};
}

Sketch normalize_sketch(const Sketch& sketch, double margin) {
  if (sketch.empty()) throw Error(ErrorCode::ZeroExtent, "cannot normalize an empty sketch");

  double lo_x = std::numeric_limits<double>::infinity();
  double lo_y = lo_x;
  double hi_x = -lo_x;
  double hi_y = -lo_x;
  auto extend = [&](double x, double y) {
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  };
  for (const auto& p : sketch.primitives) {
    if (p.kind == PrimitiveKind::Circle) {
      extend(p.params[0] - p.params[2], p.params[1] - p.params[2]);
      extend(p.params[0] + p.params[2], p.params[1] + p.params[2]);
      continue;
    }
    const auto v = p.values();
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) extend(v[i], v[i + 1]);
  }

  const double extent = std::max(hi_x - lo_x, hi_y - lo_y);
  if (!(extent > 0.0)) throw Error(ErrorCode::ZeroExtent, "sketch bounding box is a single point");

  const double scale = (1.0 - 2.0 * margin) / extent;
  const double cx = 0.5 * (lo_x + hi_x);
  const double cy = 0.5 * (lo_y + hi_y);

  Sketch out = sketch;
  for (auto& p : out.primitives) {
    auto v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (p.is_radius(static_cast<int>(i))) {
        v[i] *= scale;
      } else {
        v[i] = 0.5 + (v[i] - (i % 2 == 0 ? cx : cy)) * scale;
      }
    }
  }
  return out;
}

}  // namespace cadsketch
