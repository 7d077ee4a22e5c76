#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "forsim/agents.hpp"
#include "forsim/config.hpp"
#include "forsim/dynamics.hpp"
#include "forsim/error.hpp"
#include "forsim/policy.hpp"
#include "forsim/random.hpp"
#include "forsim/scenario.hpp"
#include "forsim/selection.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

// One virtual future seeded by one candidate. states[k] is the world at
// virtual step k: the real state followed by T + 1 propagated states.
// selected[k] is the index tracked on the transition k -> k + 1.
struct RolloutBranch {
  GridIndex seed;
  std::vector<WorldState> states;
  std::vector<GridIndex> selected;
  std::vector<int> selected_lines;  // reference line of each selected candidate
  std::vector<double> rewards;      // per transition, filled by the optimizer
  bool failed = false;
  std::string failure;
  int predictor_calls = 0;
  int center_propagations = 0;

  const AgentState& terminal_center() const { return states.back().center.state; }

  // Changes of the tracked reference line between consecutive transitions.
  int reselections() const {
    int events = 0;
    for (std::size_t k = 1; k < selected_lines.size(); ++k) events += selected_lines[k] != selected_lines[k - 1];
    return events;
  }
};

// Reference line closest to a point, or -1 for an empty map.
inline int nearest_line(const VectorMap& map, Vec2 p) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < map.reference_lines.size(); ++k) {
    const double d = map.reference_lines[k].project(p).distance;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

// Transitions on which the center agent's lattice cell (its nearest reference
// line) changes to a line other than the one the seed candidate targets.
// Converging onto the seeded line is the mode itself, not drift.
inline int modality_drift_events(const RolloutBranch& b, const VectorMap& map) {
  if (b.selected_lines.empty() || b.states.empty()) return 0;
  const int seeded = b.selected_lines.front();
  int events = 0;
  int prev = nearest_line(map, b.states.front().center.state.position());
  for (std::size_t k = 1; k < b.states.size(); ++k) {
    const int cell = nearest_line(map, b.states[k].center.state.position());
    if (cell != prev && cell != seeded) ++events;
    prev = cell;
  }
  return events;
}

// Shared immutable inputs of a forward simulation.
struct RolloutContext {
  const Scenario* scenario = nullptr;
  LatticePolicy lattice;
  ScoringParams theta;
  const PredictorParams* predictor = nullptr;
  SimConfig cfg;
  CenterParadigm center = CenterParadigm::TrajectoryAligned;
  OthersParadigm others = OthersParadigm::StepwisePrediction;

  const VectorMap& map() const { return scenario->map; }
  const Polyline& route() const { return scenario->center_route(); }
};

// Advances the other agents by one transition according to the paradigm.
class OthersStepper {
 public:
  OthersStepper(const RolloutContext& ctx, const WorldState& start) : ctx_(ctx) {
    if (ctx_.others == OthersParadigm::SinglePrediction && !start.others.empty()) {
      ++calls_;
      for (std::size_t k = 0; k < start.others.size(); ++k) {
        frozen_.push_back(predictor_features(start, k + 1, ctx_.map(), ctx_.cfg));
      }
    }
  }

  std::vector<ControlInput> controls(const WorldState& w, int transition) {
    std::vector<ControlInput> u(w.others.size());
    switch (ctx_.others) {
      case OthersParadigm::ConstantAction:
        for (std::size_t k = 0; k < u.size(); ++k) {
          u[k] = k < w.other_controls.size() ? w.other_controls[k] : ControlInput{};
        }
        break;
      case OthersParadigm::SinglePrediction:
        for (std::size_t k = 0; k < u.size(); ++k) {
          u[k] = predicted_control(*ctx_.predictor, frozen_[k], transition, w.others[k].shape.wheelbase,
                                   ctx_.cfg.limits);
        }
        break;
      case OthersParadigm::StepwisePrediction: {
        PredictorCalls c;
        u = predict_first_controls(w, *ctx_.predictor, ctx_.map(), ctx_.cfg, &c);
        calls_ += c.count;
        break;
      }
    }
    return u;
  }

  int calls() const { return calls_; }

 private:
  const RolloutContext& ctx_;
  std::vector<PredictorFeatures> frozen_;
  int calls_ = 0;
};

// Moves the world one transition: the center to `center_next`, the others
// with `controls`.
inline WorldState advance_world(const WorldState& w, const AgentState& center_next,
                                const std::vector<ControlInput>& controls, const SimConfig& cfg) {
  WorldState n = w;
  n.center.state = center_next;
  for (std::size_t k = 0; k < n.others.size(); ++k) {
    n.others[k].state =
        bicycle_step(w.others[k].state, controls[k], w.others[k].shape.wheelbase, cfg.dt, cfg.limits.v_max);
    n.other_controls[k] = controls[k];
  }
  n.record_history(cfg.history);
  n.step = w.step + 1;
  return n;
}

inline CandidateSet regenerate(const RolloutContext& ctx, const WorldState& w, Rng* rng) {
  return generate_candidates(w, ctx.map(), ctx.route(), ctx.lattice, ctx.theta, ctx.cfg.candidate_noise, rng);
}

// Unrolls the branch seeded by `seed`. Failures mark the branch instead of
// propagating, so a group always has G members.
inline RolloutBranch simulate_branch(const RolloutContext& ctx, const WorldState& real, const CandidateSet& cands,
                                     GridIndex seed, std::uint64_t rng_seed) {
  const SimConfig& cfg = ctx.cfg;
  const int horizon = cfg.horizon;
  RolloutBranch b;
  b.seed = seed;
  Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(cands.flat(seed))));

  WorldState w = real;
  w.step = 0;
  if (w.other_controls.size() != w.others.size()) w.other_controls.assign(w.others.size(), {});
  b.states.push_back(w);

  SelectionParadigm par{ctx.center, seed, cands.at(seed)};
  OthersStepper others(ctx, w);
  PidState pid;
  const double wheelbase = w.center.shape.wheelbase;

  try {
    // Seeding transition x_0 -> x_1 tracks the seed candidate itself.
    {
      const auto [c, next_pid] = propagate(w.center.state, cands.at(seed), pid, cfg, wheelbase);
      pid = next_pid;
      ++b.center_propagations;
      w = advance_world(w, c, others.controls(w, 0), cfg);
      b.selected.push_back(seed);
      b.selected_lines.push_back(cands.line_of(seed));
      b.states.push_back(w);
    }
    GridIndex prev = seed;
    for (int t = 1; t <= horizon; ++t) {
      const CandidateSet local = regenerate(ctx, w, cfg.candidate_noise > 0.0 ? &rng : nullptr);
      GridIndex pick = seed;
      switch (ctx.center) {
        case CenterParadigm::MaxLikelihood: pick = select_max_likelihood(local); break;
        case CenterParadigm::ModeConsistent: pick = select_mode_consistent(par); break;
        case CenterParadigm::TrajectoryAligned:
          // Windows shorter than two points cannot discriminate: every
          // candidate starts at the current state. Hold the last choice.
          pick = (t + 2 > horizon) ? prev : select_trajectory_aligned(local, par, t);
          break;
      }
      const auto [c, next_pid] = propagate(w.center.state, local.at(pick), pid, cfg, wheelbase);
      pid = next_pid;
      ++b.center_propagations;
      w = advance_world(w, c, others.controls(w, t), cfg);
      b.selected.push_back(pick);
      b.selected_lines.push_back(local.line_of(pick));
      b.states.push_back(w);
      prev = pick;
    }
  } catch (const Error& e) {
    b.failed = true;
    b.failure = e.what();
  }
  b.predictor_calls = others.calls();
  return b;
}

inline int thread_budget() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("FORSIM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

// Runs fn(k) for k in [0, n) on up to thread_budget() threads. Results must
// be written to per-index slots so the output never depends on scheduling.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int k = w; k < n; k += workers) fn(k);
    });
  }
  for (auto& t : pool) t.join();
}

// Stepwise forward simulation of all G seed candidates.
inline std::vector<RolloutBranch> forward_simulate(const RolloutContext& ctx, const WorldState& real,
                                                   const CandidateSet& cands, std::uint64_t seed) {
  cands.check_dense();
  std::vector<RolloutBranch> out(static_cast<std::size_t>(cands.size()));
  parallel_for(cands.size(), [&](int k) {
    out[static_cast<std::size_t>(k)] = simulate_branch(ctx, real, cands, cands.grid(k), seed);
  });
  return out;
}

// Mean pairwise distance between terminal center positions.
inline double branch_dispersion(const std::vector<RolloutBranch>& branches) {
  if (branches.size() < 2) throw TooFewBranches("branch_dispersion: at least 2 branches required");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < branches.size(); ++a) {
    for (std::size_t b = a + 1; b < branches.size(); ++b) {
      sum += distance(branches[a].terminal_center().position(), branches[b].terminal_center().position());
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Tracking baselines
// ---------------------------------------------------------------------------

enum class TrackingBaseline { PerfectTracking, TrajectoryTracking };

// Perfect tracking replays the seed candidate verbatim (constant velocity past
// its end); trajectory tracking PID-tracks it without reselection.
inline RolloutBranch tracking_branch(const RolloutContext& ctx, const WorldState& real, const CandidateSet& cands,
                                     GridIndex seed, TrackingBaseline mode) {
  const SimConfig& cfg = ctx.cfg;
  RolloutBranch b;
  b.seed = seed;
  WorldState w = real;
  w.step = 0;
  if (w.other_controls.size() != w.others.size()) w.other_controls.assign(w.others.size(), {});
  b.states.push_back(w);
  OthersStepper others(ctx, w);
  PidState pid;
  const Trajectory& ref = cands.at(seed);
  for (int t = 0; t <= cfg.horizon; ++t) {
    AgentState c;
    if (mode == TrackingBaseline::PerfectTracking) {
      const auto k = static_cast<std::size_t>(t + 1);
      if (k < ref.size()) {
        c = ref[k];
      } else {
        c = w.center.state;
        c.x += c.vx * cfg.dt;
        c.y += c.vy * cfg.dt;
      }
    } else {
      const auto [next, next_pid] = propagate(w.center.state, ref, pid, cfg, w.center.shape.wheelbase);
      c = next;
      pid = next_pid;
    }
    ++b.center_propagations;
    w = advance_world(w, c, others.controls(w, t), cfg);
    b.selected.push_back(seed);
    b.selected_lines.push_back(cands.line_of(seed));
    b.states.push_back(w);
  }
  b.predictor_calls = others.calls();
  return b;
}

}  // namespace forsim
