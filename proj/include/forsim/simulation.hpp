#pragma once

#include <string>
#include <vector>

#include "forsim/agents.hpp"
#include "forsim/config.hpp"
#include "forsim/dynamics.hpp"
#include "forsim/error.hpp"
#include "forsim/policy.hpp"
#include "forsim/rollout.hpp"
#include "forsim/scenario.hpp"
#include "forsim/selection.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

// Real-time closed loop: the center agent executes its highest-scoring
// candidate, the other agents follow the reference driver.
struct Episode {
  std::vector<WorldState> states;
  std::vector<GridIndex> executed;
  bool truncated = false;  // stopped early by a runtime error
  std::string reason;
};

struct NoStepHook {
  void operator()(int, const WorldState&, const CandidateSet&) const {}
};

template <typename OnStep = NoStepHook>
Episode run_episode(const Scenario& scenario, const ScoringParams& theta, const SimConfig& cfg, int steps,
                    OnStep&& on_step = {}) {
  const LatticePolicy lattice = LatticePolicy::from_config(cfg);
  Episode ep;
  WorldState w = WorldState::from_scenario(scenario);
  ep.states.push_back(w);
  PidState pid;
  for (int t = 0; t < steps; ++t) {
    CandidateSet cands;
    try {
      cands = generate_candidates(w, scenario.map, scenario.center_route(), lattice, theta);
    } catch (const Error& e) {
      ep.truncated = true;
      ep.reason = e.what();
      break;
    }
    const GridIndex pick = select_max_likelihood(cands);
    on_step(t, w, cands);
    const auto [c, next_pid] = propagate(w.center.state, cands.at(pick), pid, cfg, w.center.shape.wheelbase);
    pid = next_pid;
    std::vector<ControlInput> u(w.others.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = reference_driver(w, k + 1, scenario.map, cfg);
    w = advance_world(w, c, u, cfg);
    ep.executed.push_back(pick);
    ep.states.push_back(w);
  }
  return ep;
}

}  // namespace forsim
