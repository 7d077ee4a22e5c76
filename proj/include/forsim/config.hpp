#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forsim/error.hpp"

namespace forsim {

struct PidGains {
  double speed_kp = 1.0;
  double speed_ki = 0.05;
  double speed_kd = 0.0;
  double lateral_kp = 0.8;
  double lateral_ki = 0.0;
  double lateral_kd = 0.2;
  double heading_gain = 1.0;  // k_h, weight of heading error in the lateral loop
  int lookahead = 3;          // points ahead of the nearest target point
  double integral_limit = 2.0;
};

struct Limits {
  double v_max = 15.0;
  double a_max = 4.0;
  double steer_max = 0.6;
};

struct LossWeights {
  double anchor = 1.0;
  double kin = 0.5;
  double smooth = 0.5;
};

struct RewardConfig {
  double w_progress = 1.0;
  double w_collision = 10.0;
  double w_offroad = 2.0;
  double w_comfort = 0.5;
  double comfort_accel = 2.4;
  double failure_reward = -100.0;
};

struct MetricsConfig {
  double comfort_accel = 2.4;
  double ttc_horizon = 20.0;
  std::vector<double> reference_speeds;  // empty: built-in truncated-normal sample
};

// Global knobs of the engine. Horizon and dt are normally taken from the
// scenario via apply_scenario_timing().
struct SimConfig {
  int n_ref = 3;
  int n_lon = 4;
  int horizon = 40;       // T
  int future_steps = 0;   // T_f; 0 means T / 2
  double dt = 0.1;
  int episode_steps = 0;  // real-time steps per episode; 0 means T

  double gamma = 0.9;
  double clip_epsilon = 0.2;
  double dual_clip = 3.0;
  int inner_epochs = 4;   // mu
  int iterations = 10;    // I
  int buffer_capacity = 2048;
  int minibatch = 64;
  double policy_lr = 0.05;
  double predictor_lr = 1e-2;
  int history = 5;        // H
  double line_reach = 10.0;
  double plausibility_slack = 0.5;
  double candidate_noise = 0.0;  // lateral jitter std in meters, off by default
  std::vector<double> initial_theta = {0.05, 0.05, -0.5, -5.0, 0.0};

  PidGains pid;
  Limits limits;
  LossWeights loss;
  RewardConfig reward;
  MetricsConfig metrics;

  int group_size() const { return n_ref * n_lon; }
  int effective_future_steps() const { return future_steps > 0 ? future_steps : horizon / 2; }
  int effective_episode_steps() const { return episode_steps > 0 ? episode_steps : horizon; }

  void validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("SimConfig: " + what); };
    if (n_ref < 1 || n_lon < 1) fail("N_ref and N_lon must be >= 1");
    if (horizon < 2) fail("T >= 2");
    if (!(dt > 0.0 && dt <= 1.0)) fail("dt in (0, 1]");
    if (effective_future_steps() > horizon) fail("T_f <= T");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) fail("epsilon in (0, 1)");
    if (!(dual_clip > 1.0 + clip_epsilon)) fail("c > 1 + epsilon");
    if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma in (0, 1]");
    if (loss.anchor < 0.0 || loss.kin < 0.0 || loss.smooth < 0.0) fail("loss weights >= 0");
    if (reward.w_progress < 0.0 || reward.w_collision < 0.0 || reward.w_offroad < 0.0 ||
        reward.w_comfort < 0.0) {
      fail("reward weights >= 0");
    }
    if (!(reward.comfort_accel > 0.0)) fail("comfort threshold > 0");
    if (history < 1) fail("H >= 1");
    if (inner_epochs < 0 || iterations < 0) fail("mu and I >= 0");
    if (buffer_capacity < 1 || minibatch < 1) fail("buffer capacity and minibatch >= 1");
    if (initial_theta.size() != 5) fail("initial_theta must have 5 entries");
  }
};

inline void to_json(nlohmann::json& j, const PidGains& p) {
  j = {{"speed_kp", p.speed_kp},         {"speed_ki", p.speed_ki},     {"speed_kd", p.speed_kd},
       {"lateral_kp", p.lateral_kp},     {"lateral_ki", p.lateral_ki}, {"lateral_kd", p.lateral_kd},
       {"heading_gain", p.heading_gain}, {"lookahead", p.lookahead},   {"integral_limit", p.integral_limit}};
}

inline void from_json(const nlohmann::json& j, PidGains& p) {
  const PidGains d;
  p.speed_kp = j.value("speed_kp", d.speed_kp);
  p.speed_ki = j.value("speed_ki", d.speed_ki);
  p.speed_kd = j.value("speed_kd", d.speed_kd);
  p.lateral_kp = j.value("lateral_kp", d.lateral_kp);
  p.lateral_ki = j.value("lateral_ki", d.lateral_ki);
  p.lateral_kd = j.value("lateral_kd", d.lateral_kd);
  p.heading_gain = j.value("heading_gain", d.heading_gain);
  p.lookahead = j.value("lookahead", d.lookahead);
  p.integral_limit = j.value("integral_limit", d.integral_limit);
}

inline void to_json(nlohmann::json& j, const SimConfig& c) {
  j = nlohmann::json{
      {"n_ref", c.n_ref},
      {"n_lon", c.n_lon},
      {"horizon", c.horizon},
      {"future_steps", c.future_steps},
      {"dt", c.dt},
      {"episode_steps", c.episode_steps},
      {"gamma", c.gamma},
      {"clip_epsilon", c.clip_epsilon},
      {"dual_clip", c.dual_clip},
      {"inner_epochs", c.inner_epochs},
      {"iterations", c.iterations},
      {"buffer_capacity", c.buffer_capacity},
      {"minibatch", c.minibatch},
      {"policy_lr", c.policy_lr},
      {"predictor_lr", c.predictor_lr},
      {"history", c.history},
      {"line_reach", c.line_reach},
      {"plausibility_slack", c.plausibility_slack},
      {"candidate_noise", c.candidate_noise},
      {"initial_theta", c.initial_theta},
      {"pid", c.pid},
      {"limits", {{"v_max", c.limits.v_max}, {"a_max", c.limits.a_max}, {"steer_max", c.limits.steer_max}}},
      {"loss", {{"w_anchor", c.loss.anchor}, {"w_kin", c.loss.kin}, {"w_smooth", c.loss.smooth}}},
      {"reward",
       {{"w_progress", c.reward.w_progress},
        {"w_collision", c.reward.w_collision},
        {"w_offroad", c.reward.w_offroad},
        {"w_comfort", c.reward.w_comfort},
        {"comfort_accel", c.reward.comfort_accel},
        {"failure_reward", c.reward.failure_reward}}},
      {"metrics",
       {{"comfort_accel", c.metrics.comfort_accel},
        {"ttc_horizon", c.metrics.ttc_horizon},
        {"reference_speeds", c.metrics.reference_speeds}}},
  };
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, SimConfig& c) {
  const SimConfig d;
  c.n_ref = j.value("n_ref", d.n_ref);
  c.n_lon = j.value("n_lon", d.n_lon);
  c.horizon = j.value("horizon", d.horizon);
  c.future_steps = j.value("future_steps", d.future_steps);
  c.dt = j.value("dt", d.dt);
  c.episode_steps = j.value("episode_steps", d.episode_steps);
  c.gamma = j.value("gamma", d.gamma);
  c.clip_epsilon = j.value("clip_epsilon", d.clip_epsilon);
  c.dual_clip = j.value("dual_clip", d.dual_clip);
  c.inner_epochs = j.value("inner_epochs", d.inner_epochs);
  c.iterations = j.value("iterations", d.iterations);
  c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  c.minibatch = j.value("minibatch", d.minibatch);
  c.policy_lr = j.value("policy_lr", d.policy_lr);
  c.predictor_lr = j.value("predictor_lr", d.predictor_lr);
  c.history = j.value("history", d.history);
  c.line_reach = j.value("line_reach", d.line_reach);
  c.plausibility_slack = j.value("plausibility_slack", d.plausibility_slack);
  c.candidate_noise = j.value("candidate_noise", d.candidate_noise);
  c.initial_theta = j.value("initial_theta", d.initial_theta);
  c.pid = j.value("pid", d.pid);
  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    c.limits.v_max = l.value("v_max", d.limits.v_max);
    c.limits.a_max = l.value("a_max", d.limits.a_max);
    c.limits.steer_max = l.value("steer_max", d.limits.steer_max);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss.anchor = l.value("w_anchor", d.loss.anchor);
    c.loss.kin = l.value("w_kin", d.loss.kin);
    c.loss.smooth = l.value("w_smooth", d.loss.smooth);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    c.reward.w_progress = r.value("w_progress", d.reward.w_progress);
    c.reward.w_collision = r.value("w_collision", d.reward.w_collision);
    c.reward.w_offroad = r.value("w_offroad", d.reward.w_offroad);
    c.reward.w_comfort = r.value("w_comfort", d.reward.w_comfort);
    c.reward.comfort_accel = r.value("comfort_accel", d.reward.comfort_accel);
    c.reward.failure_reward = r.value("failure_reward", d.reward.failure_reward);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    c.metrics.comfort_accel = m.value("comfort_accel", d.metrics.comfort_accel);
    c.metrics.ttc_horizon = m.value("ttc_horizon", d.metrics.ttc_horizon);
    c.metrics.reference_speeds = m.value("reference_speeds", d.metrics.reference_speeds);
  }
}

}  // namespace forsim
