#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "forsim/config.hpp"
#include "forsim/dynamics.hpp"
#include "forsim/error.hpp"
#include "forsim/random.hpp"
#include "forsim/scenario.hpp"
#include "forsim/state.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

enum class OthersParadigm { ConstantAction, SinglePrediction, StepwisePrediction };

inline std::string_view to_string(OthersParadigm p) {
  switch (p) {
    case OthersParadigm::ConstantAction: return "constant-action";
    case OthersParadigm::SinglePrediction: return "single-prediction";
    case OthersParadigm::StepwisePrediction: return "stepwise-prediction";
  }
  return "?";
}

inline OthersParadigm parse_others_paradigm(std::string_view s) {
  if (s == "constant-action") return OthersParadigm::ConstantAction;
  if (s == "single-prediction") return OthersParadigm::SinglePrediction;
  if (s == "stepwise-prediction") return OthersParadigm::StepwisePrediction;
  throw ValidationError("unknown others paradigm: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

// Predictor input, in order:
//   0 bias
//   1 speed / 10
//   2 acceleration over the last history step (m/s^2)
//   3 yaw rate over the last history step (rad/s)
//   4 signed offset from the nearest lane centerline (m, clamped to +-3)
//   5 heading error to that lane (rad)
//   6 lane curvature ahead, x10 (1/m)
//   7 gap shortfall to the leader, min(0, gap - desired) / 10
//   8 closing speed to the leader, min(0, v_lead - v) (m/s)
inline constexpr int kPredictorFeatures = 9;
using PredictorFeatures = std::array<double, kPredictorFeatures>;

struct LeaderGap {
  bool found = false;
  double gap = 0.0;        // bumper to bumper
  double lead_speed = 0.0;  // along the follower heading
};

struct LaneFrame {
  bool found = false;
  double offset = 0.0;
  double heading_error = 0.0;
  double curvature_ahead = 0.0;
};

inline constexpr double kLeaderRange = 60.0;
inline constexpr double kLeaderCorridor = 2.0;
inline constexpr double kStandstillGap = 4.0;
inline constexpr double kTimeHeadway = 1.2;

inline double desired_gap(double v) { return kStandstillGap + kTimeHeadway * v; }

inline double lane_lookahead(double v) { return 1.0 + 0.3 * v; }

inline LeaderGap find_leader(const WorldState& w, std::size_t agent) {
  const Agent& me = w.agent(agent);
  const Vec2 fwd = me.state.heading_vector();
  LeaderGap best;
  double best_long = kLeaderRange;
  for (std::size_t k = 0; k < w.agent_count(); ++k) {
    if (k == agent) continue;
    const Agent& o = w.agent(k);
    const Vec2 d = o.state.position() - me.state.position();
    const double lon = d.dot(fwd);
    const double lat = d.dot(fwd.perp());
    if (lon <= 0.0 || lon >= best_long || std::abs(lat) > kLeaderCorridor) continue;
    best_long = lon;
    best.found = true;
    best.gap = lon - 0.5 * (me.shape.length + o.shape.length);
    best.lead_speed = o.state.velocity().dot(fwd);
  }
  return best;
}

inline LaneFrame lane_frame(const AgentState& s, const VectorMap& map, double reach) {
  LaneFrame out;
  double best = reach;
  const Polyline* line = nullptr;
  PolylineProjection proj;
  for (const auto& l : map.reference_lines) {
    const auto p = l.project(s.position());
    if (p.distance > best || p.tangent.dot(s.heading_vector()) < 0.0) continue;
    best = p.distance;
    proj = p;
    line = &l;
  }
  if (line == nullptr) return out;
  out.found = true;
  out.offset = proj.offset;
  out.heading_error = std::atan2(proj.tangent.cross(s.heading_vector()), proj.tangent.dot(s.heading_vector()));
  out.curvature_ahead = line->curvature_at(proj.arc_length + lane_lookahead(std::max(0.0, s.speed())));
  return out;
}

inline PredictorFeatures predictor_features(const WorldState& w, std::size_t agent, const VectorMap& map,
                                            const SimConfig& cfg) {
  const AgentState& cur = w.agent(agent).state;
  const auto& hist = w.histories.at(agent);
  // A missing or single-entry history pads by repeating the oldest state,
  // which zeroes the rate features.
  const AgentState& prev = hist.size() >= 2 ? hist[hist.size() - 2] : (hist.empty() ? cur : hist.front());
  const double v = std::max(0.0, cur.speed());

  PredictorFeatures f{};
  f[0] = 1.0;
  f[1] = v / 10.0;
  f[2] = (v - std::max(0.0, prev.speed())) / cfg.dt;
  f[3] = wrap_angle(heading_angle(cur) - heading_angle(prev)) / cfg.dt;
  const LaneFrame lane = lane_frame(cur, map, cfg.line_reach);
  if (lane.found) {
    f[4] = std::clamp(lane.offset, -3.0, 3.0);
    f[5] = lane.heading_error;
    f[6] = 10.0 * lane.curvature_ahead;
  }
  const LeaderGap lead = find_leader(w, agent);
  if (lead.found) {
    f[7] = std::min(0.0, lead.gap - desired_gap(v)) / 10.0;
    f[8] = std::min(0.0, lead.lead_speed - v);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Parameters and open-loop rollouts
// ---------------------------------------------------------------------------

// Linear map from features to `horizon` steps of (accel, curvature) controls.
// Row 2k is the acceleration of step k, row 2k+1 its path curvature.
struct PredictorParams {
  int horizon = 0;
  std::vector<double> w;

  static PredictorParams zero(int horizon) {
    return {horizon, std::vector<double>(static_cast<std::size_t>(2 * horizon * kPredictorFeatures), 0.0)};
  }

  int rows() const { return 2 * horizon; }
  double& at(int row, int col) { return w[static_cast<std::size_t>(row * kPredictorFeatures + col)]; }
  double at(int row, int col) const { return w[static_cast<std::size_t>(row * kPredictorFeatures + col)]; }

  double row_dot(int row, const PredictorFeatures& f) const {
    double acc = 0.0;
    for (int c = 0; c < kPredictorFeatures; ++c) acc += at(row, c) * f[static_cast<std::size_t>(c)];
    return acc;
  }
};

inline double max_curvature(const Limits& lim, double wheelbase) { return std::tan(lim.steer_max) / wheelbase; }

inline ControlInput control_from_curvature(double accel, double curvature, double wheelbase, const Limits& lim) {
  const double k_max = max_curvature(lim, wheelbase);
  return {std::clamp(accel, -lim.a_max, lim.a_max), std::atan(std::clamp(curvature, -k_max, k_max) * wheelbase)};
}

// Control of predicted step k; steps past the predictor horizon repeat the last one.
inline ControlInput predicted_control(const PredictorParams& p, const PredictorFeatures& f, int step,
                                      double wheelbase, const Limits& lim) {
  const int k = std::min(step, p.horizon - 1);
  return control_from_curvature(p.row_dot(2 * k, f), p.row_dot(2 * k + 1, f), wheelbase, lim);
}

// States after each of `steps` applications of the controls, excluding the start.
inline Trajectory rollout_controls(const AgentState& s, const std::vector<ControlInput>& controls, double wheelbase,
                                   const SimConfig& cfg) {
  Trajectory t;
  t.dt = cfg.dt;
  AgentState cur = s;
  for (const auto& u : controls) {
    cur = bicycle_step(cur, u, wheelbase, cfg.dt, cfg.limits.v_max);
    t.points.push_back(cur);
  }
  return t;
}

// Counts predictor invocations, one per call of predict().
struct PredictorCalls {
  int count = 0;
};

// Horizon-T prediction for every other agent of the world.
inline std::vector<Trajectory> predict(const WorldState& w, const PredictorParams& p, const VectorMap& map,
                                       const SimConfig& cfg, PredictorCalls* calls = nullptr) {
  if (calls != nullptr) ++calls->count;
  std::vector<Trajectory> out;
  out.reserve(w.others.size());
  for (std::size_t k = 0; k < w.others.size(); ++k) {
    const auto f = predictor_features(w, k + 1, map, cfg);
    const double wb = w.others[k].shape.wheelbase;
    std::vector<ControlInput> u;
    for (int step = 0; step < cfg.horizon; ++step) u.push_back(predicted_control(p, f, step, wb, cfg.limits));
    out.push_back(rollout_controls(w.others[k].state, u, wb, cfg));
  }
  return out;
}

// First-step controls of a fresh prediction, without rolling out.
inline std::vector<ControlInput> predict_first_controls(const WorldState& w, const PredictorParams& p,
                                                        const VectorMap& map, const SimConfig& cfg,
                                                        PredictorCalls* calls = nullptr) {
  if (calls != nullptr) ++calls->count;
  std::vector<ControlInput> out;
  for (std::size_t k = 0; k < w.others.size(); ++k) {
    const auto f = predictor_features(w, k + 1, map, cfg);
    out.push_back(predicted_control(p, f, 0, w.others[k].shape.wheelbase, cfg.limits));
  }
  return out;
}

// Advances only the center agent open-loop with zero control; used while
// rolling other agents in isolation.
inline Agent coast(const Agent& a, const SimConfig& cfg) {
  Agent n = a;
  n.state = bicycle_step(a.state, {}, a.shape.wheelbase, cfg.dt, cfg.limits.v_max);
  return n;
}

inline std::vector<Trajectory> rollout_constant_action(const WorldState& w, const SimConfig& cfg) {
  std::vector<Trajectory> out;
  for (std::size_t k = 0; k < w.others.size(); ++k) {
    const ControlInput u = k < w.other_controls.size() ? w.other_controls[k] : ControlInput{};
    out.push_back(rollout_controls(w.others[k].state, std::vector<ControlInput>(static_cast<std::size_t>(cfg.horizon), u),
                                   w.others[k].shape.wheelbase, cfg));
  }
  return out;
}

// Predicted once at the initial state and replayed verbatim.
inline std::vector<Trajectory> rollout_single_prediction(const WorldState& w, const PredictorParams& p,
                                                         const VectorMap& map, const SimConfig& cfg,
                                                         PredictorCalls* calls = nullptr) {
  return predict(w, p, map, cfg, calls);
}

// Re-predicts from the evolving virtual world at every step and executes only
// the first predicted step. The center agent follows `center_path` when
// given (one state per step), otherwise it coasts.
inline std::vector<Trajectory> rollout_stepwise_prediction(const WorldState& w0, const PredictorParams& p,
                                                           const VectorMap& map, const SimConfig& cfg,
                                                           PredictorCalls* calls = nullptr,
                                                           const Trajectory* center_path = nullptr) {
  WorldState w = w0;
  std::vector<Trajectory> out(w.others.size());
  for (auto& t : out) t.dt = cfg.dt;
  for (int step = 0; step < cfg.horizon; ++step) {
    const auto u = predict_first_controls(w, p, map, cfg, calls);
    for (std::size_t k = 0; k < w.others.size(); ++k) {
      w.others[k].state = bicycle_step(w.others[k].state, u[k], w.others[k].shape.wheelbase, cfg.dt, cfg.limits.v_max);
      w.other_controls[k] = u[k];
      out[k].points.push_back(w.others[k].state);
    }
    if (center_path != nullptr && static_cast<std::size_t>(step) < center_path->size()) {
      w.center.state = (*center_path)[static_cast<std::size_t>(step)];
    } else {
      w.center = coast(w.center, cfg);
    }
    w.record_history(cfg.history);
    ++w.step;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composite prediction loss
// ---------------------------------------------------------------------------

struct PredictionBatch {
  std::vector<Trajectory> predictions;  // length T each
  std::vector<Trajectory> targets;      // length T_f each
  double dt = 0.1;
};

struct LossTerms {
  double total = 0.0;
  double anchor = 0.0;
  double kin = 0.0;
  double smooth = 0.0;
};

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  if (std::abs(x) < 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

inline double sign_of(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

using StateGrad = std::array<double, 6>;

// Loss of one predicted trajectory against its target, optionally with the
// gradient with respect to every predicted channel.
inline LossTerms trajectory_loss(const Trajectory& pred, const Trajectory& target, double dt, const LossWeights& w,
                                 std::vector<StateGrad>* grad = nullptr) {
  const std::size_t n = pred.size();
  if (n < 3) throw HorizonTooShort("prediction_loss: T >= 3 required for central differences");
  if (target.size() > n) throw ValidationError("PredictionBatch: T_f <= T");
  if (grad != nullptr) grad->assign(n, StateGrad{});

  LossTerms out;
  const std::size_t tf = target.size();
  if (tf > 0) {
    const double scale = 1.0 / static_cast<double>(tf * 6);
    for (std::size_t k = 0; k < tf; ++k) {
      const auto a = pred[k].channels();
      const auto b = target[k].channels();
      for (std::size_t c = 0; c < 6; ++c) {
        out.anchor += smooth_l1(a[c] - b[c]) * scale;
        if (grad != nullptr) (*grad)[k][c] += w.anchor * smooth_l1_grad(a[c] - b[c]) * scale;
      }
    }
  }

  {
    const double scale = 1.0 / static_cast<double>((n - 2) * 2);
    for (std::size_t t = 1; t + 1 < n; ++t) {
      const double rx = pred[t].vx - (pred[t + 1].x - pred[t - 1].x) / (2.0 * dt);
      const double ry = pred[t].vy - (pred[t + 1].y - pred[t - 1].y) / (2.0 * dt);
      out.kin += (smooth_l1(rx) + smooth_l1(ry)) * scale;
      if (grad != nullptr) {
        const double gx = w.kin * smooth_l1_grad(rx) * scale;
        const double gy = w.kin * smooth_l1_grad(ry) * scale;
        (*grad)[t][4] += gx;
        (*grad)[t][5] += gy;
        (*grad)[t + 1][0] -= gx / (2.0 * dt);
        (*grad)[t + 1][1] -= gy / (2.0 * dt);
        (*grad)[t - 1][0] += gx / (2.0 * dt);
        (*grad)[t - 1][1] += gy / (2.0 * dt);
      }
    }
  }

  {
    const double s1 = 1.0 / static_cast<double>((n - 1) * 2);
    const double s2 = 1.0 / static_cast<double>((n - 2) * 2);
    for (std::size_t t = 0; t + 1 < n; ++t) {
      for (std::size_t c = 4; c < 6; ++c) {
        const double d1 = pred[t + 1].channels()[c] - pred[t].channels()[c];
        out.smooth += std::abs(d1) * s1;
        if (grad != nullptr) {
          const double g = w.smooth * sign_of(d1) * s1;
          (*grad)[t + 1][c] += g;
          (*grad)[t][c] -= g;
        }
        if (t + 2 < n) {
          const double d2 = pred[t + 2].channels()[c] - 2.0 * pred[t + 1].channels()[c] + pred[t].channels()[c];
          out.smooth += std::abs(d2) * s2;
          if (grad != nullptr) {
            const double g = w.smooth * sign_of(d2) * s2;
            (*grad)[t + 2][c] += g;
            (*grad)[t + 1][c] -= 2.0 * g;
            (*grad)[t][c] += g;
          }
        }
      }
    }
  }

  out.total = w.anchor * out.anchor + w.kin * out.kin + w.smooth * out.smooth;
  return out;
}

// Mean over agents of the weighted anchor + kinematic + smoothness loss.
inline LossTerms prediction_loss(const PredictionBatch& batch, const SimConfig& cfg) {
  if (batch.predictions.size() != batch.targets.size()) {
    throw ValidationError("PredictionBatch: agent counts must match");
  }
  LossTerms sum;
  for (std::size_t k = 0; k < batch.predictions.size(); ++k) {
    const auto l = trajectory_loss(batch.predictions[k], batch.targets[k], batch.dt, cfg.loss);
    sum.total += l.total;
    sum.anchor += l.anchor;
    sum.kin += l.kin;
    sum.smooth += l.smooth;
  }
  const double n = std::max<double>(1.0, static_cast<double>(batch.predictions.size()));
  return {sum.total / n, sum.anchor / n, sum.kin / n, sum.smooth / n};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// One supervised example: features and state at prediction time plus the
// realized future states.
struct PredictorSample {
  PredictorFeatures features{};
  AgentState state;
  double wheelbase = 2.7;
  Trajectory future;  // T_f realized states after the sample time
};

namespace detail {

struct UnrollStep {
  double x, y, theta, v;  // state before the step
  double accel, curvature;
  bool accel_active, curvature_active, speed_active;
  double v_next;
};

}  // namespace detail

// Loss over the samples and its gradient with respect to W, by reverse
// accumulation through the bicycle unroll of the predicted controls.
inline std::pair<LossTerms, std::vector<double>> predictor_loss_and_grad(const std::vector<PredictorSample>& samples,
                                                                         const PredictorParams& p,
                                                                         const SimConfig& cfg) {
  std::vector<double> grad(p.w.size(), 0.0);
  LossTerms sum;
  const double dt = cfg.dt;
  const int n = p.horizon;
  const Limits& lim = cfg.limits;
  for (const auto& sample : samples) {
    const double wb = sample.wheelbase;
    const double k_max = max_curvature(lim, wb);
    std::vector<detail::UnrollStep> tape;
    std::vector<ControlInput> controls;
    double x = sample.state.x, y = sample.state.y, theta = heading_angle(sample.state);
    double v = std::max(0.0, sample.state.speed());
    for (int k = 0; k < n; ++k) {
      const double a_raw = p.row_dot(2 * k, sample.features);
      const double c_raw = p.row_dot(2 * k + 1, sample.features);
      detail::UnrollStep st{};
      st.x = x;
      st.y = y;
      st.theta = theta;
      st.v = v;
      st.accel = std::clamp(a_raw, -lim.a_max, lim.a_max);
      st.curvature = std::clamp(c_raw, -k_max, k_max);
      st.accel_active = std::abs(a_raw) < lim.a_max;
      st.curvature_active = std::abs(c_raw) < k_max;
      const double v_raw = v + st.accel * dt;
      st.speed_active = v_raw > 0.0 && v_raw < lim.v_max;
      st.v_next = std::clamp(v_raw, 0.0, lim.v_max);
      tape.push_back(st);
      controls.push_back({st.accel, std::atan(st.curvature * wb)});
      x += v * std::cos(theta) * dt;
      y += v * std::sin(theta) * dt;
      theta += v * st.curvature * dt;
      v = st.v_next;
    }
    // Forward pass through the real dynamics for the loss value.
    const Trajectory pred = rollout_controls(sample.state, controls, wb, cfg);
    std::vector<StateGrad> dpred;
    const auto l = trajectory_loss(pred, sample.future, dt, cfg.loss, &dpred);
    sum.total += l.total;
    sum.anchor += l.anchor;
    sum.kin += l.kin;
    sum.smooth += l.smooth;

    double gx = 0.0, gy = 0.0, gth = 0.0, gv = 0.0;
    for (int k = n - 1; k >= 0; --k) {
      const auto& st = tape[static_cast<std::size_t>(k)];
      // Output channels of the state after step k.
      const double th1 = st.theta + st.v * st.curvature * dt;
      const double c1 = std::cos(th1), s1 = std::sin(th1);
      const auto& d = dpred[static_cast<std::size_t>(k)];
      gx += d[0];
      gy += d[1];
      gth += -d[2] * s1 + d[3] * c1 + d[4] * (-st.v_next * s1) + d[5] * (st.v_next * c1);
      gv += d[4] * c1 + d[5] * s1;
      // Back through the step.
      const double c0 = std::cos(st.theta), s0 = std::sin(st.theta);
      double g_theta0 = gth + gx * (-st.v * s0 * dt) + gy * (st.v * c0 * dt);
      double g_v0 = gx * c0 * dt + gy * s0 * dt + gth * st.curvature * dt;
      const double g_curv = gth * st.v * dt;
      double g_acc = 0.0;
      if (st.speed_active) {
        g_v0 += gv;
        g_acc = gv * dt;
      }
      const auto f = sample.features;
      if (st.accel_active) {
        for (int c = 0; c < kPredictorFeatures; ++c) {
          grad[static_cast<std::size_t>((2 * k) * kPredictorFeatures + c)] += g_acc * f[static_cast<std::size_t>(c)];
        }
      }
      if (st.curvature_active) {
        for (int c = 0; c < kPredictorFeatures; ++c) {
          grad[static_cast<std::size_t>((2 * k + 1) * kPredictorFeatures + c)] +=
              g_curv * f[static_cast<std::size_t>(c)];
        }
      }
      gth = g_theta0;
      gv = g_v0;
    }
  }
  const double m = std::max<double>(1.0, static_cast<double>(samples.size()));
  for (double& g : grad) g /= m;
  return {{sum.total / m, sum.anchor / m, sum.kin / m, sum.smooth / m}, grad};
}

inline LossTerms predictor_loss(const std::vector<PredictorSample>& samples, const PredictorParams& p,
                                const SimConfig& cfg) {
  LossTerms sum;
  for (const auto& s : samples) {
    std::vector<ControlInput> u;
    for (int k = 0; k < p.horizon; ++k) u.push_back(predicted_control(p, s.features, k, s.wheelbase, cfg.limits));
    const auto l = trajectory_loss(rollout_controls(s.state, u, s.wheelbase, cfg), s.future, cfg.dt, cfg.loss);
    sum.total += l.total;
    sum.anchor += l.anchor;
    sum.kin += l.kin;
    sum.smooth += l.smooth;
  }
  const double m = std::max<double>(1.0, static_cast<double>(samples.size()));
  return {sum.total / m, sum.anchor / m, sum.kin / m, sum.smooth / m};
}

// Plain gradient descent on the composite loss.
inline PredictorParams train_predictor(const std::vector<PredictorSample>& samples, PredictorParams p,
                                       const SimConfig& cfg, int steps = 1) {
  if (samples.empty()) return p;
  for (int s = 0; s < steps; ++s) {
    const auto [loss, grad] = predictor_loss_and_grad(samples, p, cfg);
    for (std::size_t k = 0; k < p.w.size(); ++k) p.w[k] -= cfg.predictor_lr * grad[k];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Reference driver and synthetic pre-training
// ---------------------------------------------------------------------------

struct DriverGains {
  double offset = 0.04;    // curvature per meter of lane offset
  double heading = 0.4;    // curvature per radian of heading error
  double gap = 0.3;        // accel per meter of gap shortfall
  double closing = 0.8;    // accel per m/s of closing speed
};

// Lane keeping plus car following, linear in the predictor features. Drives
// the other agents of the real-time world and generates demonstrations.
inline ControlInput reference_driver(const WorldState& w, std::size_t agent, const VectorMap& map,
                                     const SimConfig& cfg, double intent_accel = 0.0, DriverGains g = {}) {
  const Agent& me = w.agent(agent);
  const double v = std::max(0.0, me.state.speed());
  double curvature = 0.0;
  const LaneFrame lane = lane_frame(me.state, map, cfg.line_reach);
  if (lane.found) {
    curvature = lane.curvature_ahead - g.offset * std::clamp(lane.offset, -3.0, 3.0) - g.heading * lane.heading_error;
  }
  double accel = intent_accel;
  const LeaderGap lead = find_leader(w, agent);
  if (lead.found) {
    accel += g.gap * std::min(0.0, lead.gap - desired_gap(v)) + g.closing * std::min(0.0, lead.lead_speed - v);
  }
  return control_from_curvature(accel, curvature, me.shape.wheelbase, cfg.limits);
}

namespace detail {

// Straight lead-in, circular arc, straight exit; lanes offset to both sides.
inline VectorMap synthetic_road(Rng& rng, int lanes, double lane_width) {
  const double lead = rng.uniform(5.0, 40.0);
  const double radius = rng.uniform(25.0, 120.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  const double sweep = rng.uniform(0.3, 1.2);
  const bool straight = rng.uniform() < 0.25;
  std::vector<Vec2> center;
  Vec2 p{0.0, 0.0};
  double heading = 0.0;
  const double step = 1.0;
  for (double s = 0.0; s < lead; s += step) {
    center.push_back(p);
    p = p + Vec2{std::cos(heading), std::sin(heading)} * step;
  }
  if (!straight) {
    const int n = static_cast<int>(std::abs(radius) * sweep / step);
    for (int k = 0; k < n; ++k) {
      center.push_back(p);
      p = p + Vec2{std::cos(heading), std::sin(heading)} * step;
      heading += step / radius;
    }
  }
  for (int k = 0; k < 150; ++k) {
    center.push_back(p);
    p = p + Vec2{std::cos(heading), std::sin(heading)} * step;
  }
  VectorMap map;
  for (int l = 0; l < lanes; ++l) {
    const double off = (l - (lanes - 1) / 2.0) * lane_width;
    std::vector<Vec2> pts;
    for (std::size_t k = 0; k < center.size(); ++k) {
      const Vec2 a = center[std::min(k + 1, center.size() - 1)] - center[k == 0 ? 0 : k - 1];
      const Vec2 n = a * (1.0 / a.norm());
      pts.push_back(center[k] + n.perp() * off);
    }
    map.reference_lines.emplace_back(pts);
  }
  return map;
}

}  // namespace detail

struct DemonstrationSet {
  std::vector<PredictorSample> samples;
  std::vector<std::vector<ControlInput>> controls;  // reference controls for the T steps after each sample
};

// Logged reference-driver episodes on random roads. Lead vehicles carry a
// random constant intent acceleration; followers react to them.
inline DemonstrationSet synthetic_demonstrations(const SimConfig& cfg, std::uint64_t seed, int episodes) {
  Rng rng(seed);
  DemonstrationSet out;
  const int horizon = cfg.horizon;
  const int steps = 2 * horizon;
  for (int e = 0; e < episodes; ++e) {
    const VectorMap map = detail::synthetic_road(rng, 1, 3.5);
    const Polyline& lane = map.reference_lines.front();
    const int n_agents = 1 + static_cast<int>(rng.index(3));
    WorldState w;
    std::vector<double> intent;
    double s = rng.uniform(0.0, 5.0);
    for (int a = 0; a < n_agents; ++a) {
      const double v = rng.uniform(2.0, 13.0);
      const double off = rng.uniform(-1.0, 1.0);
      const double herr = rng.uniform(-0.08, 0.08);
      const Vec2 t = lane.tangent_at(s);
      const Vec2 pos = lane.point_at(s) + t.perp() * off;
      Agent ag;
      ag.state = AgentState::from_angle(pos.x, pos.y, std::atan2(t.y, t.x) + herr, v);
      // Index 0 is the rearmost vehicle; only the front one keeps a free intent.
      if (a == 0) {
        w.center = ag;
      } else {
        w.others.push_back(ag);
      }
      const bool front = (a == n_agents - 1);
      intent.push_back(front ? (rng.uniform() < 0.5 ? 0.0 : rng.uniform(-3.0, 1.0)) : 0.0);
      s += rng.uniform(12.0, 40.0);
    }
    w.other_controls.assign(w.others.size(), {});
    w.histories.assign(w.agent_count(), {});
    // Warm-up so the history reflects each agent's intent.
    std::vector<std::vector<AgentState>> states(w.agent_count());
    std::vector<std::vector<ControlInput>> applied(w.agent_count());
    std::vector<std::vector<PredictorFeatures>> feats(w.agent_count());
    for (int step = 0; step < steps + horizon + cfg.history; ++step) {
      w.record_history(cfg.history);
      std::vector<ControlInput> u(w.agent_count());
      for (std::size_t a = 0; a < w.agent_count(); ++a) {
        feats[a].push_back(predictor_features(w, a, map, cfg));
        states[a].push_back(w.agent(a).state);
        u[a] = reference_driver(w, a, map, cfg, intent[a]);
        applied[a].push_back(u[a]);
      }
      for (std::size_t a = 0; a < w.agent_count(); ++a) {
        Agent& ag = a == 0 ? w.center : w.others[a - 1];
        ag.state = bicycle_step(ag.state, u[a], ag.shape.wheelbase, cfg.dt, cfg.limits.v_max);
      }
    }
    const int tf = cfg.effective_future_steps();
    for (std::size_t a = 0; a < w.agent_count(); ++a) {
      for (int t = cfg.history; t < cfg.history + steps; t += 2) {
        PredictorSample smp;
        smp.features = feats[a][static_cast<std::size_t>(t)];
        smp.state = states[a][static_cast<std::size_t>(t)];
        smp.wheelbase = w.agent(a).shape.wheelbase;
        smp.future.dt = cfg.dt;
        for (int k = 1; k <= tf; ++k) smp.future.points.push_back(states[a][static_cast<std::size_t>(t + k)]);
        out.samples.push_back(smp);
        out.controls.emplace_back(applied[a].begin() + t, applied[a].begin() + t + horizon);
      }
    }
  }
  return out;
}

// Ridge regression of the reference controls (accel, curvature) on the features.
inline PredictorParams fit_predictor(const DemonstrationSet& demo, int horizon, double ridge = 1e-3) {
  PredictorParams p = PredictorParams::zero(horizon);
  if (demo.samples.empty()) return p;
  const auto n = static_cast<Eigen::Index>(demo.samples.size());
  Eigen::MatrixXd X(n, kPredictorFeatures);
  Eigen::MatrixXd Y(n, 2 * horizon);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& smp = demo.samples[static_cast<std::size_t>(r)];
    for (int c = 0; c < kPredictorFeatures; ++c) X(r, c) = smp.features[static_cast<std::size_t>(c)];
    const auto& u = demo.controls[static_cast<std::size_t>(r)];
    for (int k = 0; k < horizon; ++k) {
      Y(r, 2 * k) = u[static_cast<std::size_t>(k)].accel;
      Y(r, 2 * k + 1) = std::tan(u[static_cast<std::size_t>(k)].steer) / smp.wheelbase;
    }
  }
  Eigen::MatrixXd A = X.transpose() * X;
  A.diagonal().array() += ridge * static_cast<double>(n);
  const Eigen::MatrixXd B = A.ldlt().solve(X.transpose() * Y);
  for (int row = 0; row < 2 * horizon; ++row) {
    for (int c = 0; c < kPredictorFeatures; ++c) p.at(row, c) = B(c, row);
  }
  return p;
}

inline constexpr std::uint64_t kPretrainSeed = 20240917;
inline constexpr int kPretrainEpisodes = 120;

// Predictor pre-trained on synthetic demonstrations for the given timing;
// memoized per (horizon, dt, history).
inline const PredictorParams& pretrained_predictor(const SimConfig& cfg) {
  static std::mutex mu;
  static std::map<std::tuple<int, double, int, double>, PredictorParams> cache;
  const std::lock_guard lock(mu);
  const auto key = std::make_tuple(cfg.horizon, cfg.dt, cfg.history, cfg.line_reach);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const auto demo = synthetic_demonstrations(cfg, kPretrainSeed, kPretrainEpisodes);
    it = cache.emplace(key, fit_predictor(demo, cfg.horizon)).first;
  }
  return it->second;
}

}  // namespace forsim
