#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "forsim/config.hpp"
#include "forsim/geometry.hpp"
#include "forsim/state.hpp"

namespace forsim {

struct ControlInput {
  double accel = 0.0;  // m/s^2
  double steer = 0.0;  // rad

  bool operator==(const ControlInput&) const = default;

  static ControlInput clamped(double accel, double steer, const Limits& lim) {
    return {std::clamp(accel, -lim.a_max, lim.a_max), std::clamp(steer, -lim.steer_max, lim.steer_max)};
  }
};

// Controller memory, owned by exactly one rollout branch.
struct PidState {
  double speed_integral = 0.0;
  double prev_speed_error = 0.0;
  double lateral_integral = 0.0;
  double prev_cross_track_error = 0.0;  // combined lateral error of the last call
  bool primed = false;                  // derivative terms need one prior sample

  bool operator==(const PidState&) const = default;
};

// Discrete kinematic bicycle. Heading is advanced first, but the position
// moves along the heading held at the start of the step (forward Euler).
inline AgentState bicycle_step(const AgentState& s, const ControlInput& u, double wheelbase, double dt,
                               double v_max = std::numeric_limits<double>::infinity()) {
  const double v = std::max(0.0, s.speed());
  const double yaw = v / wheelbase * std::tan(u.steer) * dt;

  AgentState n;
  n.x = s.x + v * s.cos_h * dt;
  n.y = s.y + v * s.sin_h * dt;
  const double cy = std::cos(yaw);
  const double sy = std::sin(yaw);
  n.cos_h = s.cos_h * cy - s.sin_h * sy;
  n.sin_h = s.sin_h * cy + s.cos_h * sy;
  n = normalized_heading(n);
  const double v_next = std::clamp(v + u.accel * dt, 0.0, v_max);
  n.vx = v_next * n.cos_h;
  n.vy = v_next * n.sin_h;
  return n;
}

inline std::size_t nearest_point(const Trajectory& t, Vec2 p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double d = distance(t[k].position(), p);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

// Two independent loops: longitudinal PID on the lookahead speed error,
// lateral PID on cross-track + k_h * lookahead heading error.
inline std::pair<ControlInput, PidState> pid_control(const AgentState& s, const Trajectory& target,
                                                      const PidState& pid, const SimConfig& cfg) {
  const PidGains& g = cfg.pid;
  const double dt = cfg.dt;
  const std::size_t n = nearest_point(target, s.position());
  const std::size_t m = std::min(n + static_cast<std::size_t>(std::max(g.lookahead, 0)), target.size() - 1);
  const AgentState& ref = target[m];

  PidState next = pid;

  const double v = std::max(0.0, s.speed());
  const double speed_error = std::max(0.0, ref.speed()) - v;
  next.speed_integral = std::clamp(pid.speed_integral + speed_error * dt, -g.integral_limit, g.integral_limit);
  const double speed_rate = pid.primed ? (speed_error - pid.prev_speed_error) / dt : 0.0;
  const double accel = g.speed_kp * speed_error + g.speed_ki * next.speed_integral + g.speed_kd * speed_rate;

  // Cross-track against the nearest point: measured at the lookahead point it
  // picks up along-track distance whenever the path bends.
  const AgentState& near = target[n];
  const double cross_track = near.heading_vector().cross(s.position() - near.position());  // + when left of target
  const double heading_error = wrap_angle(heading_angle(s) - heading_angle(ref));
  const double lateral_error = cross_track + g.heading_gain * heading_error;
  next.lateral_integral =
      std::clamp(pid.lateral_integral + lateral_error * dt, -g.integral_limit, g.integral_limit);
  const double lateral_rate = pid.primed ? (lateral_error - pid.prev_cross_track_error) / dt : 0.0;
  const double steer =
      -(g.lateral_kp * lateral_error + g.lateral_ki * next.lateral_integral + g.lateral_kd * lateral_rate);

  next.prev_speed_error = speed_error;
  next.prev_cross_track_error = lateral_error;
  next.primed = true;
  return {ControlInput::clamped(accel, steer, cfg.limits), next};
}

// One-step execution: PID tracking followed by bicycle propagation. Every
// virtual state advance goes through here.
inline std::pair<AgentState, PidState> propagate(const AgentState& s, const Trajectory& target, const PidState& pid,
                                                 const SimConfig& cfg, double wheelbase) {
  const auto [u, next_pid] = pid_control(s, target, pid, cfg);
  return {bicycle_step(s, u, wheelbase, cfg.dt, cfg.limits.v_max), next_pid};
}

}  // namespace forsim
