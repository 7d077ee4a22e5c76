#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "forsim/error.hpp"
#include "forsim/geometry.hpp"

namespace forsim {

// Pose, heading pair and planar velocity of one agent at one timestep.
// Layout matches the six-channel trajectory point [x, y, cos, sin, vx, vy].
struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double cos_h = 1.0;
  double sin_h = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  bool operator==(const AgentState&) const = default;

  static AgentState from_angle(double x, double y, double heading, double speed) {
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    return {x, y, c, s, speed * c, speed * s};
  }

  Vec2 position() const { return {x, y}; }
  Vec2 heading_vector() const { return {cos_h, sin_h}; }
  Vec2 velocity() const { return {vx, vy}; }

  // Signed forward speed. The kinematic model never reverses, so callers
  // clamp at zero where it matters.
  double speed() const { return vx * cos_h + vy * sin_h; }

  std::array<double, 6> channels() const { return {x, y, cos_h, sin_h, vx, vy}; }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(cos_h) && std::isfinite(sin_h) &&
           std::isfinite(vx) && std::isfinite(vy);
  }
};

// Angle in (-pi, pi]; (-1, 0) maps to +pi.
inline double heading_angle(const AgentState& s) {
  if (s.sin_h == 0.0 && s.cos_h < 0.0) return std::numbers::pi;
  return std::atan2(s.sin_h, s.cos_h);
}

inline AgentState normalized_heading(AgentState s) {
  const double n = std::sqrt(s.cos_h * s.cos_h + s.sin_h * s.sin_h);
  s.cos_h /= n;
  s.sin_h /= n;
  return s;
}

struct VehicleShape {
  double length = 4.5;
  double width = 1.9;
  double wheelbase = 2.7;

  bool operator==(const VehicleShape&) const = default;
};

struct Agent {
  AgentState state;
  VehicleShape shape;

  bool operator==(const Agent&) const = default;
};

struct Trajectory {
  std::vector<AgentState> points;
  double dt = 0.1;

  std::size_t size() const { return points.size(); }
  const AgentState& operator[](std::size_t k) const { return points[k]; }
  const AgentState& back() const { return points.back(); }
};

// Largest step between consecutive points exceeding v_max * dt + slack,
// or zero when the trajectory is plausible.
inline double implausible_step(const Trajectory& t, double v_max, double slack) {
  double worst = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double d = distance(t[k - 1].position(), t[k].position());
    if (d > v_max * t.dt + slack) worst = std::max(worst, d);
  }
  return worst;
}

struct GridIndex {
  int i = 0;  // lateral (reference line)
  int j = 0;  // longitudinal (speed profile)

  bool operator==(const GridIndex&) const = default;
};

// Dense n_ref x n_lon grid of candidate trajectories and their logits.
struct CandidateSet {
  int n_ref = 0;
  int n_lon = 0;
  std::vector<Trajectory> trajectories;  // row-major, flat index i * n_lon + j
  std::vector<double> scores;
  std::vector<int> line_ids;             // reference line targeted by each row
  std::vector<std::vector<double>> features;  // per candidate, filled by scoring
  bool degenerate = false;               // rows padded by duplication

  int size() const { return n_ref * n_lon; }
  int flat(GridIndex g) const { return g.i * n_lon + g.j; }
  GridIndex grid(int flat_index) const { return {flat_index / n_lon, flat_index % n_lon}; }
  bool contains(GridIndex g) const { return g.i >= 0 && g.i < n_ref && g.j >= 0 && g.j < n_lon; }

  const Trajectory& at(GridIndex g) const { return trajectories[static_cast<std::size_t>(flat(g))]; }
  double score(GridIndex g) const { return scores[static_cast<std::size_t>(flat(g))]; }
  int line_of(GridIndex g) const { return line_ids.empty() ? g.i : line_ids[static_cast<std::size_t>(g.i)]; }

  void check_dense() const {
    const auto g = static_cast<std::size_t>(size());
    if (n_ref <= 0 || n_lon <= 0 || trajectories.size() != g || scores.size() != g) {
      throw ValidationError("CandidateSet: grid is not dense");
    }
  }
};

}  // namespace forsim
