#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <vector>

#include "forsim/agents.hpp"
#include "forsim/collision.hpp"
#include "forsim/config.hpp"
#include "forsim/error.hpp"
#include "forsim/metrics.hpp"
#include "forsim/policy.hpp"
#include "forsim/random.hpp"
#include "forsim/rollout.hpp"
#include "forsim/scenario.hpp"
#include "forsim/simulation.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

// ---------------------------------------------------------------------------
// Reward model
// ---------------------------------------------------------------------------

struct StepEvents {
  double progress = 0.0;
  bool collision = false;
  bool off_road = false;
  bool harsh = false;
};

inline double step_reward(const StepEvents& e, const RewardConfig& rc) {
  return rc.w_progress * e.progress - rc.w_collision * (e.collision ? 1.0 : 0.0) -
         rc.w_offroad * (e.off_road ? 1.0 : 0.0) - rc.w_comfort * (e.harsh ? 1.0 : 0.0);
}

inline StepEvents step_events(const WorldState& world, const WorldState& prev, const VectorMap& map,
                              const Polyline& route, const RewardConfig& rc, double dt) {
  StepEvents e;
  const AgentState& now = world.center.state;
  const AgentState& before = prev.center.state;
  e.progress = route.project(now.position()).arc_length - route.project(before.position()).arc_length;
  const ObbShape ego = obb_of(now, world.center.shape);
  for (const auto& o : world.others) e.collision = e.collision || obb_overlap(ego, obb_of(o.state, o.shape));
  e.off_road = !box_on_road(ego, map);
  e.harsh = std::abs(std::max(0.0, now.speed()) - std::max(0.0, before.speed())) / dt > rc.comfort_accel;
  return e;
}

inline double step_reward(const WorldState& world, const WorldState& prev, const VectorMap& map,
                          const Polyline& route, const RewardConfig& rc, double dt) {
  return step_reward(step_events(world, prev, map, route, rc, dt), rc);
}

// Fills branch.rewards with one term per recorded transition.
inline void score_branch(RolloutBranch& b, const VectorMap& map, const Polyline& route, const RewardConfig& rc,
                         double dt) {
  b.rewards.clear();
  for (std::size_t k = 1; k < b.states.size(); ++k) {
    b.rewards.push_back(step_reward(b.states[k], b.states[k - 1], map, route, rc, dt));
  }
}

inline double discounted_sum(const std::vector<double>& rewards, double gamma) {
  double r = 0.0, g = 1.0;
  for (double x : rewards) {
    r += g * x;
    g *= gamma;
  }
  return r;
}

inline double branch_return(const RolloutBranch& b, const RewardConfig& rc, double gamma) {
  if (b.failed) return rc.failure_reward;
  return discounted_sum(b.rewards, gamma);
}

// ---------------------------------------------------------------------------
// Group-relative advantages and the dual-clip surrogate
// ---------------------------------------------------------------------------

inline constexpr double kStdEpsilon = 1e-8;

struct GroupEvaluation {
  std::vector<double> returns;
  std::vector<double> advantages;
  double mean = 0.0;
  double std = 0.0;
};

inline GroupEvaluation group_advantages(const std::vector<double>& returns) {
  if (returns.size() < 2) throw GroupTooSmall("group_advantages: G >= 2 required");
  GroupEvaluation g;
  g.returns = returns;
  const double n = static_cast<double>(returns.size());
  g.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : returns) ss += (r - g.mean) * (r - g.mean);
  g.std = std::sqrt(ss / n);  // population std
  g.advantages.assign(returns.size(), 0.0);
  if (g.std > kStdEpsilon) {
    for (std::size_t k = 0; k < returns.size(); ++k) g.advantages[k] = (returns[k] - g.mean) / g.std;
  }
  return g;
}

inline double clip_ratio(double rho, double eps) { return std::clamp(rho, 1.0 - eps, 1.0 + eps); }

inline double dual_clip(double rho, double adv, double eps, double c) {
  const double m = std::min(rho * adv, clip_ratio(rho, eps) * adv);
  return adv >= 0.0 ? m : std::max(m, c * adv);
}

// d psi / d rho with the active-branch convention; exact ties take the
// clipped branch.
inline double dual_clip_slope(double rho, double adv, double eps, double c) {
  const double unclipped = rho * adv;
  const double clipped = clip_ratio(rho, eps) * adv;
  const double clip_slope = (rho > 1.0 - eps && rho < 1.0 + eps) ? adv : 0.0;
  const double inner_slope = unclipped < clipped ? adv : clip_slope;
  if (adv >= 0.0) return inner_slope;
  const double inner = std::min(unclipped, clipped);
  return inner > c * adv ? inner_slope : 0.0;
}

// ---------------------------------------------------------------------------
// Buffer
// ---------------------------------------------------------------------------

struct Transition {
  WorldState state;
  CandidateSet candidates;  // features and old-policy scores
  GridIndex executed;
  std::vector<double> returns;
  std::vector<double> advantages;
  std::vector<PredictorSample> predictor_samples;
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t k) const { return items_[k]; }
  Transition& operator[](std::size_t k) { return items_[k]; }

  // Up to n distinct indices, drawn by a partial Fisher-Yates shuffle.
  std::vector<std::size_t> sample(std::size_t n, Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    n = std::min(n, idx.size());
    for (std::size_t k = 0; k < n; ++k) std::swap(idx[k], idx[k + rng.index(idx.size() - k)]);
    idx.resize(n);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

// ---------------------------------------------------------------------------
// Policy objective
// ---------------------------------------------------------------------------

struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> grad;
};

inline std::vector<double> linear_scores(const std::vector<std::vector<double>>& features,
                                         const std::vector<double>& theta) {
  std::vector<double> s(features.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    s[k] = std::inner_product(features[k].begin(), features[k].end(), theta.begin(), 0.0);
  }
  return s;
}

// Mean over transitions of (1/G) sum_i psi(rho_i, A_i), rho_i the likelihood
// ratio of seed candidate i between theta and the stored old scores.
inline ObjectiveValue policy_objective(const std::vector<const Transition*>& batch, const ScoringParams& theta,
                                       double eps, double c) {
  ObjectiveValue out;
  out.grad.assign(theta.theta.size(), 0.0);
  if (batch.empty()) return out;
  for (const Transition* tr : batch) {
    const auto& cands = tr->candidates;
    const auto logp_new = log_softmax(linear_scores(cands.features, theta.theta));
    const auto logp_old = log_softmax(cands.scores);
    const auto p_new = softmax(linear_scores(cands.features, theta.theta));
    std::vector<double> mean_f(theta.theta.size(), 0.0);
    for (std::size_t k = 0; k < cands.features.size(); ++k) {
      for (std::size_t d = 0; d < mean_f.size(); ++d) mean_f[d] += p_new[k] * cands.features[k][d];
    }
    const double g = static_cast<double>(tr->advantages.size());
    for (std::size_t i = 0; i < tr->advantages.size(); ++i) {
      const double rho = std::exp(logp_new[i] - logp_old[i]);
      const double adv = tr->advantages[i];
      out.value += dual_clip(rho, adv, eps, c) / g;
      const double slope = dual_clip_slope(rho, adv, eps, c) * rho / g;
      if (slope == 0.0) continue;
      for (std::size_t d = 0; d < mean_f.size(); ++d) out.grad[d] += slope * (cands.features[i][d] - mean_f[d]);
    }
  }
  const double m = static_cast<double>(batch.size());
  out.value /= m;
  for (double& v : out.grad) v /= m;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainLogRow {
  int iteration = 0;
  double mean_return = 0.0;
  double objective = 0.0;
  double pred_loss = 0.0;
  double collapse_dispersion = 0.0;
  std::vector<double> probabilities;  // softmax over the first scenario's initial grid
  int failed_branches = 0;
};

struct TrainResult {
  ScoringParams theta;
  PredictorParams predictor;
  std::vector<TrainLogRow> log;
  int iteration = 0;
};

struct TrainOptions {
  CenterParadigm center = CenterParadigm::TrajectoryAligned;
  OthersParadigm others = OthersParadigm::StepwisePrediction;
  std::uint64_t seed = 0;
  int start_iteration = 0;
  bool update_predictor = true;
};

namespace detail {

// Realized futures of the other agents after each step of an episode.
inline void attach_predictor_targets(std::vector<Transition>& steps, const Episode& ep, const VectorMap& map,
                                     const SimConfig& cfg) {
  const int tf = cfg.effective_future_steps();
  for (std::size_t t = 0; t < steps.size(); ++t) {
    if (t + static_cast<std::size_t>(tf) >= ep.states.size()) break;
    const WorldState& w = ep.states[t];
    for (std::size_t k = 0; k < w.others.size(); ++k) {
      PredictorSample s;
      s.features = predictor_features(w, k + 1, map, cfg);
      s.state = w.others[k].state;
      s.wheelbase = w.others[k].shape.wheelbase;
      s.future.dt = cfg.dt;
      for (int f = 1; f <= tf; ++f) s.future.points.push_back(ep.states[t + static_cast<std::size_t>(f)].others[k].state);
      steps[t].predictor_samples.push_back(std::move(s));
    }
  }
}

inline std::vector<double> initial_probabilities(const Scenario& s, const ScoringParams& theta, const SimConfig& cfg) {
  const WorldState w = WorldState::from_scenario(s);
  const auto cands = generate_candidates(w, s.map, s.center_route(), LatticePolicy::from_config(cfg), theta);
  return softmax(cands.scores);
}

}  // namespace detail

// Closed-loop optimization: collect real-time steps with forward-simulated
// groups, then mu epochs of predictor and dual-clip policy updates.
inline TrainResult train(const std::vector<Scenario>& scenarios, const SimConfig& cfg_in, const TrainOptions& opt,
                         ScoringParams theta, PredictorParams predictor) {
  if (scenarios.empty()) throw ValidationError("train: at least one scenario required");
  const SimConfig cfg = apply_scenario_timing(cfg_in, scenarios.front());
  for (const auto& sc : scenarios) {
    if (sc.horizon != cfg.horizon || sc.dt != cfg.dt) throw ValidationError("train: scenarios must share horizon and dt");
  }
  cfg.validate();
  theta.check();
  if (predictor.horizon != cfg.horizon) predictor = pretrained_predictor(cfg);
  TrainResult res;
  RolloutBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));

  for (int it = 0; it < cfg.iterations; ++it) {
    const int iteration = opt.start_iteration + it + 1;
    const ScoringParams theta_old = theta;
    const PredictorParams pred = predictor;
    std::size_t pushed = 0;
    double return_sum = 0.0;
    int return_count = 0;
    double dispersion_sum = 0.0;
    int dispersion_count = 0;
    int failed = 0;

    for (std::size_t si = 0; si < scenarios.size(); ++si) {
      const Scenario& sc = scenarios[si];
      const RolloutContext ctx{&sc, LatticePolicy::from_config(cfg), theta_old, &pred, cfg, opt.center, opt.others};
      std::vector<Transition> steps;
      const std::uint64_t ep_seed = derive_seed(opt.seed, static_cast<std::uint64_t>(iteration) * 7919u + si);
      auto collect = [&](int t, const WorldState& w, const CandidateSet& cands) {
        auto branches = forward_simulate(ctx, w, cands, derive_seed(ep_seed, static_cast<std::uint64_t>(t)));
        std::vector<double> returns;
        for (auto& b : branches) {
          score_branch(b, sc.map, sc.center_route(), cfg.reward, cfg.dt);
          returns.push_back(branch_return(b, cfg.reward, cfg.gamma));
          failed += b.failed ? 1 : 0;
        }
        const auto ge = group_advantages(returns);
        return_sum += std::accumulate(returns.begin(), returns.end(), 0.0);
        return_count += static_cast<int>(returns.size());
        dispersion_sum += branch_dispersion(branches);
        ++dispersion_count;
        Transition tr;
        tr.state = w;
        tr.candidates = cands;
        tr.executed = select_max_likelihood(cands);
        tr.returns = ge.returns;
        tr.advantages = ge.advantages;
        steps.push_back(std::move(tr));
      };
      const Episode ep = run_episode(sc, theta_old, cfg, cfg.effective_episode_steps(), collect);
      detail::attach_predictor_targets(steps, ep, sc.map, cfg);
      pushed += steps.size();
      for (auto& s : steps) buffer.push(std::move(s));
    }
    std::vector<std::size_t> fresh;
    for (std::size_t k = buffer.size() - std::min(pushed, buffer.size()); k < buffer.size(); ++k) fresh.push_back(k);

    Rng rng(derive_seed(opt.seed, 0x9e37u + static_cast<std::uint64_t>(iteration)));
    for (int epoch = 0; epoch < cfg.inner_epochs && buffer.size() > 0; ++epoch) {
      const auto idx = buffer.sample(static_cast<std::size_t>(cfg.minibatch), rng);
      if (opt.update_predictor) {
        std::vector<PredictorSample> samples;
        for (std::size_t k : idx) {
          const auto& ps = buffer[k].predictor_samples;
          samples.insert(samples.end(), ps.begin(), ps.end());
        }
        if (!samples.empty()) predictor = train_predictor(samples, predictor, cfg);
      }
      std::vector<const Transition*> batch;
      for (std::size_t k : idx) batch.push_back(&buffer[k]);
      const auto obj = policy_objective(batch, theta, cfg.clip_epsilon, cfg.dual_clip);
      for (std::size_t d = 0; d < theta.theta.size(); ++d) theta.theta[d] += cfg.policy_lr * obj.grad[d];
    }

    TrainLogRow row;
    row.iteration = iteration;
    row.mean_return = return_count > 0 ? return_sum / return_count : 0.0;
    row.collapse_dispersion = dispersion_count > 0 ? dispersion_sum / dispersion_count : 0.0;
    row.failed_branches = failed;
    std::vector<const Transition*> batch;
    std::vector<PredictorSample> samples;
    for (std::size_t k : fresh) {
      batch.push_back(&buffer[k]);
      samples.insert(samples.end(), buffer[k].predictor_samples.begin(), buffer[k].predictor_samples.end());
    }
    row.objective = policy_objective(batch, theta, cfg.clip_epsilon, cfg.dual_clip).value;
    if (!samples.empty()) row.pred_loss = predictor_loss(samples, predictor, cfg).total;
    row.probabilities = detail::initial_probabilities(scenarios.front(), theta, cfg);
    res.log.push_back(std::move(row));
  }
  res.theta = theta;
  res.predictor = predictor;
  res.iteration = opt.start_iteration + cfg.iterations;
  return res;
}

}  // namespace forsim
