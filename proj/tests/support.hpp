#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "forsim/forsim.hpp"

namespace forsim::test {

inline std::string fixture(const std::string& name) { return std::string(FORSIM_FIXTURE_DIR) + "/" + name; }

inline Polyline straight(double y, double x0 = -20.0, double x1 = 300.0, double step = 5.0) {
  std::vector<Vec2> pts;
  for (double x = x0; x <= x1 + 1e-9; x += step) pts.push_back({x, y});
  return Polyline(pts);
}

inline Polygon rect(double x0, double x1, double y0, double y1) {
  return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

// Straight road with `lanes` parallel lines 3.5 m apart, centered on y = 0.
inline Scenario parallel_road(int lanes, double speed = 8.0) {
  Scenario s;
  const double half = lanes * 3.5 / 2.0;
  for (int k = 0; k < lanes; ++k) s.map.reference_lines.push_back(straight((k - (lanes - 1) / 2.0) * 3.5));
  s.map.drivable_area.push_back(rect(-20.0, 300.0, -half, half));
  s.map.routes.push_back(straight(0.0, 0.0, 250.0));
  s.center.state = AgentState::from_angle(0.0, 0.0, 0.0, speed);
  return s;
}

inline Agent car(double x, double y, double heading, double speed) {
  Agent a;
  a.state = AgentState::from_angle(x, y, heading, speed);
  return a;
}

inline Trajectory straight_trajectory(double x0, double y, double speed, int n, double dt = 0.1) {
  Trajectory t;
  t.dt = dt;
  for (int k = 0; k < n; ++k) t.points.push_back(AgentState::from_angle(x0 + speed * dt * k, y, 0.0, speed));
  return t;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

// Algebraic (Kasa) circle fit; returns the radius.
inline double fit_circle_radius(const std::vector<Vec2>& pts) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, sxz = 0, syz = 0, sz = 0;
  const double n = static_cast<double>(pts.size());
  for (const auto& p : pts) {
    const double z = p.x * p.x + p.y * p.y;
    sx += p.x; sy += p.y; sxx += p.x * p.x; syy += p.y * p.y; sxy += p.x * p.y;
    sxz += p.x * z; syz += p.y * z; sz += z;
  }
  // Solve [sxx sxy sx; sxy syy sy; sx sy n] [a b c]' = -[sxz syz sz]'
  const double m[3][4] = {{sxx, sxy, sx, -sxz}, {sxy, syy, sy, -syz}, {sx, sy, n, -sz}};
  double a[3][4];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) a[i][j] = m[i][j];
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    for (int j = 0; j < 4; ++j) std::swap(a[c][j], a[piv][j]);
    for (int r = 0; r < 3; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (int j = 0; j < 4; ++j) a[r][j] -= f * a[c][j];
    }
  }
  const double A = a[0][3] / a[0][0], B = a[1][3] / a[1][1], C = a[2][3] / a[2][2];
  return std::sqrt(A * A / 4 + B * B / 4 - C);
}

}  // namespace forsim::test
