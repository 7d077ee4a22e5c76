#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "forsim/config.hpp"
#include "forsim/error.hpp"
#include "forsim/random.hpp"
#include "forsim/scenario.hpp"
#include "forsim/state.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

// Candidate features, in order:
//   0 progress along the route (m)
//   1 minimum clearance to other agents, capped (m)
//   2 mean |acceleration| along the candidate (m/s^2)
//   3 fraction of points outside the drivable area
//   4 terminal speed (m/s)
inline constexpr int kNumFeatures = 5;
inline constexpr double kClearanceCap = 20.0;

struct ScoringParams {
  std::vector<double> theta = std::vector<double>(kNumFeatures, 0.0);

  void check() const {
    if (theta.size() != kNumFeatures) throw ValidationError("ScoringParams: dimension must match features");
    for (double t : theta) {
      if (!std::isfinite(t)) throw ValidationError("ScoringParams: theta must be finite");
    }
  }
};

// Synthetic lattice standing in for the neural planner: one row per reachable
// reference line (ordered right to left), one column per terminal speed.
struct LatticePolicy {
  int n_ref = 3;
  int n_lon = 4;
  int horizon = 40;
  double dt = 0.1;
  double v_max = 15.0;
  double ramp_accel = 3.0;  // peak acceleration of the speed ramps
  double reach = 10.0;

  static LatticePolicy from_config(const SimConfig& cfg) {
    return {cfg.n_ref, cfg.n_lon, cfg.horizon, cfg.dt, cfg.limits.v_max, 0.75 * cfg.limits.a_max, cfg.line_reach};
  }

  int blend_steps() const { return std::max(1, horizon / 2); }

  double terminal_speed(int j, double current) const {
    if (n_lon == 1) return current;
    return v_max * static_cast<double>(j) / static_cast<double>(n_lon - 1);
  }
};

namespace detail {

// S-curve with piecewise-constant jerk, u in [0, 1].
inline double s_curve(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u < 0.5 ? 2.0 * u * u : 1.0 - 2.0 * (1.0 - u) * (1.0 - u);
}

// Quintic Hermite blend from (offset d0, slope s0, zero curvature) at u=0 to
// rest on the line at u=1.
inline double quintic_blend(double d0, double s0, double u) {
  if (u >= 1.0) return 0.0;
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double u4 = u3 * u;
  const double u5 = u4 * u;
  const double h0 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
  const double h1 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
  return d0 * h0 + s0 * h1;
}

struct LineChoice {
  int line = 0;
  PolylineProjection proj;
  double lateral = 0.0;  // line position relative to the agent, + to its left
};

}  // namespace detail

inline std::vector<double> speed_profile(const LatticePolicy& pol, double v0, double v_end) {
  std::vector<double> v(static_cast<std::size_t>(pol.horizon));
  const double dv = v_end - v0;
  const double ramp = std::max(2.0 * std::abs(dv) / pol.ramp_accel, pol.dt);
  for (int k = 0; k < pol.horizon; ++k) {
    v[static_cast<std::size_t>(k)] = v0 + dv * detail::s_curve(k * pol.dt / ramp);
  }
  return v;
}

// Builds one candidate that follows `line` with the given speeds, starting
// exactly at the agent state.
inline Trajectory lattice_trajectory(const AgentState& s, const Polyline& line, const PolylineProjection& proj,
                                     const std::vector<double>& speeds, const LatticePolicy& pol,
                                     double extra_offset = 0.0) {
  const int n = pol.horizon;
  const double v = std::max(0.0, s.speed());
  const Vec2 tan0 = proj.tangent;
  const double rel_sin = tan0.cross(s.heading_vector());
  const int blend = pol.blend_steps();
  const double slope = v * rel_sin * pol.dt * blend;  // lateral rate per unit of blend parameter

  std::vector<Vec2> pos(static_cast<std::size_t>(n));
  double arc = proj.arc_length;
  for (int k = 0; k < n; ++k) {
    if (k > 0) arc += 0.5 * (speeds[static_cast<std::size_t>(k - 1)] + speeds[static_cast<std::size_t>(k)]) * pol.dt;
    const double u = static_cast<double>(k) / blend;
    const double d = detail::quintic_blend(proj.offset - extra_offset, slope, u) + extra_offset;
    pos[static_cast<std::size_t>(k)] = line.point_at(arc) + line.tangent_at(arc).perp() * d;
  }
  pos[0] = s.position();

  Trajectory t;
  t.dt = pol.dt;
  t.points.resize(static_cast<std::size_t>(n));
  t.points[0] = s;
  Vec2 heading = s.heading_vector();
  for (int k = 1; k < n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Vec2 d = (k + 1 < n) ? pos[ku + 1] - pos[ku - 1] : pos[ku] - pos[ku - 1];
    const double len = d.norm();
    if (len > 1e-6) heading = d * (1.0 / len);
    t.points[ku] = {pos[ku].x, pos[ku].y, heading.x, heading.y, speeds[ku] * heading.x, speeds[ku] * heading.y};
  }
  return t;
}

// Reachable reference lines for the agent, nearest first, at most n_ref.
inline std::vector<detail::LineChoice> reachable_lines(const AgentState& s, const VectorMap& map,
                                                       const LatticePolicy& pol) {
  std::vector<detail::LineChoice> found;
  for (std::size_t k = 0; k < map.reference_lines.size(); ++k) {
    const auto proj = map.reference_lines[k].project(s.position());
    if (proj.distance > pol.reach) continue;
    if (proj.tangent.dot(s.heading_vector()) < 0.0) continue;  // opposing direction of travel
    found.push_back({static_cast<int>(k), proj, s.heading_vector().perp().dot(proj.foot - s.position())});
  }
  if (found.empty()) throw NoReferenceLine("no reference line within reach of the agent");
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.proj.distance < b.proj.distance; });
  if (static_cast<int>(found.size()) > pol.n_ref) found.resize(static_cast<std::size_t>(pol.n_ref));
  return found;
}

inline std::array<double, kNumFeatures> candidate_features(const Trajectory& t, const WorldState& world,
                                                           const VectorMap& map, const Polyline& route) {
  std::array<double, kNumFeatures> f{};
  f[0] = route.project(t.back().position()).arc_length - route.project(t[0].position()).arc_length;

  double clearance = kClearanceCap;
  for (const auto& o : world.others) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double tk = static_cast<double>(k) * t.dt;
      const Vec2 p = o.state.position() + o.state.velocity() * tk;
      clearance = std::min(clearance, distance(p, t[k].position()));
    }
  }
  f[1] = clearance;

  double accel = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) accel += (t[k].velocity() - t[k - 1].velocity()).norm() / t.dt;
  f[2] = t.size() > 1 ? accel / static_cast<double>(t.size() - 1) : 0.0;

  int off = 0;
  for (const auto& p : t.points) off += map.drivable(p.position()) ? 0 : 1;
  f[3] = static_cast<double>(off) / static_cast<double>(t.size());

  f[4] = std::max(0.0, t.back().speed());
  return f;
}

// score(i, j) = theta . features(i, j)
inline CandidateSet score_candidates(CandidateSet cands, const WorldState& world, const VectorMap& map,
                                     const Polyline& route, const ScoringParams& p) {
  cands.check_dense();
  p.check();
  cands.features.resize(cands.trajectories.size());
  for (std::size_t g = 0; g < cands.trajectories.size(); ++g) {
    const auto f = candidate_features(cands.trajectories[g], world, map, route);
    cands.features[g].assign(f.begin(), f.end());
    cands.scores[g] = std::inner_product(f.begin(), f.end(), p.theta.begin(), 0.0);
  }
  return cands;
}

// Grid for the center agent of `world`. When `rng` is given and noise > 0,
// each candidate's settled lateral offset is jittered.
inline CandidateSet generate_candidates(const WorldState& world, const VectorMap& map, const Polyline& route,
                                        const LatticePolicy& pol, const ScoringParams& params,
                                        double noise = 0.0, Rng* rng = nullptr) {
  const AgentState& s = world.center.state;
  auto lines = reachable_lines(s, map, pol);
  std::stable_sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
    return a.lateral < b.lateral || (a.lateral == b.lateral && a.line < b.line);
  });

  CandidateSet c;
  c.n_ref = pol.n_ref;
  c.n_lon = pol.n_lon;
  c.degenerate = static_cast<int>(lines.size()) < pol.n_ref;
  if (c.degenerate) {
    // Pad with the nearest line.
    const auto nearest = *std::min_element(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
      return a.proj.distance < b.proj.distance;
    });
    while (static_cast<int>(lines.size()) < pol.n_ref) lines.push_back(nearest);
  }

  const double v0 = std::max(0.0, s.speed());
  for (int i = 0; i < pol.n_ref; ++i) {
    const auto& choice = lines[static_cast<std::size_t>(i)];
    c.line_ids.push_back(choice.line);
    for (int j = 0; j < pol.n_lon; ++j) {
      const auto speeds = speed_profile(pol, v0, pol.terminal_speed(j, v0));
      const double jitter = (rng != nullptr && noise > 0.0) ? noise * rng->normal() : 0.0;
      c.trajectories.push_back(lattice_trajectory(s, map.reference_lines[static_cast<std::size_t>(choice.line)],
                                                  choice.proj, speeds, pol, jitter));
    }
  }
  c.scores.assign(c.trajectories.size(), 0.0);
  return score_candidates(std::move(c), world, map, route, params);
}

inline std::vector<double> softmax(const std::vector<double>& scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp(scores[k] - top);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> log_softmax(const std::vector<double>& scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - top);
  const double lse = top + std::log(sum);
  std::vector<double> out(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) out[k] = scores[k] - lse;
  return out;
}

// Softmax probability of one candidate over the whole grid.
inline double likelihood(const CandidateSet& cands, GridIndex index) {
  return softmax(cands.scores)[static_cast<std::size_t>(cands.flat(index))];
}

// grad_theta log pi(index) = f(index) - sum_k pi_k f(k), for linear scores.
inline std::vector<double> log_likelihood_grad(const std::vector<std::vector<double>>& features,
                                               const std::vector<double>& scores, int flat_index) {
  const auto p = softmax(scores);
  const std::size_t dim = features.front().size();
  std::vector<double> g = features[static_cast<std::size_t>(flat_index)];
  for (std::size_t k = 0; k < features.size(); ++k) {
    for (std::size_t d = 0; d < dim; ++d) g[d] -= p[k] * features[k][d];
  }
  return g;
}

inline std::vector<double> likelihood_grad(const CandidateSet& cands, GridIndex index, const ScoringParams& p) {
  if (cands.features.size() != cands.trajectories.size()) {
    throw ValidationError("likelihood_grad: candidates carry no features");
  }
  std::vector<double> scores(cands.features.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    scores[k] = std::inner_product(cands.features[k].begin(), cands.features[k].end(), p.theta.begin(), 0.0);
  }
  return log_likelihood_grad(cands.features, scores, cands.flat(index));
}

}  // namespace forsim
