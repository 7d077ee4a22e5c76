#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace forsim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr bool operator==(const Vec2&) const = default;

  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  // Counter-clockwise normal.
  constexpr Vec2 perp() const { return {-y, x}; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + ab * t);
}

// Proper or touching intersection of closed segments.
inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = (q - p).cross(r - p);
    return (v > 0.0) - (v < 0.0);
  };
  auto on_segment = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) &&
           std::min(p.y, r.y) <= q.y && q.y <= std::max(p.y, r.y);
  };
  const int o1 = orient(a, b, c);
  const int o2 = orient(a, b, d);
  const int o3 = orient(c, d, a);
  const int o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, c, b)) return true;
  if (o2 == 0 && on_segment(a, d, b)) return true;
  if (o3 == 0 && on_segment(c, a, d)) return true;
  if (o4 == 0 && on_segment(c, b, d)) return true;
  return false;
}

// Result of projecting a point onto a polyline.
struct PolylineProjection {
  double arc_length = 0.0;  // along the polyline, may extend past either end
  double offset = 0.0;      // signed, positive to the left of travel
  Vec2 foot;
  Vec2 tangent{1.0, 0.0};
  double distance = 0.0;
};

// Open polyline with cached cumulative arc length. Queries past either end
// extrapolate along the first or last segment.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts) : points_(std::move(pts)) {
    cumulative_.assign(points_.size(), 0.0);
    for (std::size_t k = 1; k < points_.size(); ++k) {
      const Vec2 ab = points_[k] - points_[k - 1];
      const double len = ab.norm();
      cumulative_[k] = cumulative_[k - 1] + len;
      seg_len_.push_back(len);
      seg_tan_.push_back(len > 0.0 ? ab * (1.0 / len) : Vec2{});
    }
  }

  const std::vector<Vec2>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

  PolylineProjection project(Vec2 p) const {
    PolylineProjection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    const std::size_t n_seg = points_.size() - 1;
    for (std::size_t k = 0; k < n_seg; ++k) {
      const double len = seg_len_[k];
      if (len <= 0.0) continue;
      const Vec2 a = points_[k];
      const Vec2 tan = seg_tan_[k];
      double t = (p - a).dot(tan);
      // Only the end segments may extrapolate.
      if (k != 0 && t < 0.0) t = 0.0;
      if (k + 1 != n_seg && t > len) t = len;
      const Vec2 foot = a + tan * t;
      const Vec2 d = p - foot;
      const double d2 = d.dot(d);
      if (d2 < best_d2) {
        best_d2 = d2;
        best.arc_length = cumulative_[k] + t;
        best.foot = foot;
        best.tangent = tan;
        best.offset = tan.cross(d);
      }
    }
    best.distance = std::sqrt(best_d2);
    return best;
  }

  Vec2 point_at(double s) const {
    const std::size_t k = segment_at(s);
    const Vec2 a = points_[k];
    const Vec2 ab = points_[k + 1] - a;
    const double len = cumulative_[k + 1] - cumulative_[k];
    if (len <= 0.0) return a;
    return a + ab * ((s - cumulative_[k]) / len);
  }

  Vec2 tangent_at(double s) const {
    const std::size_t k = segment_at(s);
    const Vec2 ab = points_[k + 1] - points_[k];
    const double len = ab.norm();
    return len > 0.0 ? ab * (1.0 / len) : Vec2{1.0, 0.0};
  }

  // Heading change per meter, estimated over a window of +-half_window.
  double curvature_at(double s, double half_window = 1.0) const {
    const Vec2 t0 = tangent_at(s - half_window);
    const Vec2 t1 = tangent_at(s + half_window);
    return std::atan2(t0.cross(t1), t0.dot(t1)) / (2.0 * half_window);
  }

 private:
  std::size_t segment_at(double s) const {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t k = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
    k = (k == 0) ? 0 : k - 1;
    return std::min(k, points_.size() - 2);
  }

  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
  std::vector<double> seg_len_;
  std::vector<Vec2> seg_tan_;
};

// Simple polygon stored without the closing duplicate vertex.
class Polygon {
 public:
  Polygon() = default;
  explicit Polygon(std::vector<Vec2> pts) : points_(std::move(pts)) {
    if (points_.size() > 1 && points_.front() == points_.back()) points_.pop_back();
  }

  const std::vector<Vec2>& points() const { return points_; }

  // Even-odd rule.
  bool contains(Vec2 p) const {
    bool inside = false;
    const std::size_t n = points_.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vec2 a = points_[i];
      const Vec2 b = points_[j];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
        if (p.x < x_cross) inside = !inside;
      }
    }
    return inside;
  }

  double boundary_distance(Vec2 p) const {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = points_.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      best = std::min(best, point_segment_distance(p, points_[j], points_[i]));
    }
    return best;
  }

  // No two non-adjacent edges intersect and no adjacent edges overlap.
  bool is_simple() const {
    const std::size_t n = points_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = points_[i];
      const Vec2 b = points_[(i + 1) % n];
      if (a == b) return false;
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
        const Vec2 c = points_[j];
        const Vec2 d = points_[(j + 1) % n];
        if (adjacent) {
          // Shared vertex only: reject collinear fold-backs.
          const Vec2 shared = (j == i + 1) ? b : a;
          const Vec2 p = (j == i + 1) ? a : b;
          const Vec2 q = (j == i + 1) ? d : c;
          if ((p - shared).cross(q - shared) == 0.0 && (p - shared).dot(q - shared) > 0.0) {
            return false;
          }
          continue;
        }
        if (segments_intersect(a, b, c, d)) return false;
      }
    }
    return true;
  }

 private:
  std::vector<Vec2> points_;
};

inline bool inside_any(std::span<const Polygon> polys, Vec2 p) {
  return std::any_of(polys.begin(), polys.end(), [p](const Polygon& g) { return g.contains(p); });
}

}  // namespace forsim
