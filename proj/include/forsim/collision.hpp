#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "forsim/geometry.hpp"
#include "forsim/state.hpp"

namespace forsim {

// Oriented rectangle. heading is a unit vector along the length axis.
struct ObbShape {
  Vec2 center;
  double half_length = 2.25;
  double half_width = 0.95;
  Vec2 heading{1.0, 0.0};

  std::array<Vec2, 4> corners() const {
    const Vec2 f = heading * half_length;
    const Vec2 l = heading.perp() * half_width;
    return {center + f + l, center - f + l, center - f - l, center + f - l};
  }

  std::array<Vec2, 2> axes() const { return {heading, heading.perp()}; }

  // Half-extent of the box projected on a unit axis.
  double radius_along(Vec2 axis) const {
    return half_length * std::abs(heading.dot(axis)) + half_width * std::abs(heading.perp().dot(axis));
  }
};

inline ObbShape obb_of(const AgentState& s, const VehicleShape& shape) {
  return {s.position(), 0.5 * shape.length, 0.5 * shape.width, s.heading_vector()};
}

// Separating-axis test over the four face normals. Touching boxes overlap.
inline bool obb_overlap(const ObbShape& a, const ObbShape& b) {
  const Vec2 d = b.center - a.center;
  for (const auto& box : {a, b}) {
    for (const Vec2 axis : box.axes()) {
      if (std::abs(d.dot(axis)) > a.radius_along(axis) + b.radius_along(axis)) return false;
    }
  }
  return true;
}

struct ClosestPoints {
  double distance = 0.0;
  Vec2 on_a;
  Vec2 on_b;
};

// Minimum distance between the boundaries of two disjoint boxes; zero when
// they overlap.
inline ClosestPoints obb_closest_points(const ObbShape& a, const ObbShape& b) {
  if (obb_overlap(a, b)) return {0.0, a.center, b.center};
  ClosestPoints best{std::numeric_limits<double>::infinity(), {}, {}};
  auto closest_on_segment = [](Vec2 p, Vec2 s0, Vec2 s1) {
    const Vec2 e = s1 - s0;
    const double len2 = e.dot(e);
    const double t = len2 > 0.0 ? std::clamp((p - s0).dot(e) / len2, 0.0, 1.0) : 0.0;
    return s0 + e * t;
  };
  const auto ca = a.corners();
  const auto cb = b.corners();
  // For disjoint convex polygons the minimum is attained at a vertex of one.
  for (int k = 0; k < 4; ++k) {
    for (int e = 0; e < 4; ++e) {
      const Vec2 qb = closest_on_segment(ca[k], cb[e], cb[(e + 1) % 4]);
      const double d1 = distance(ca[k], qb);
      if (d1 < best.distance) best = {d1, ca[k], qb};
      const Vec2 qa = closest_on_segment(cb[k], ca[e], ca[(e + 1) % 4]);
      const double d2 = distance(cb[k], qa);
      if (d2 < best.distance) best = {d2, qa, cb[k]};
    }
  }
  return best;
}

}  // namespace forsim
