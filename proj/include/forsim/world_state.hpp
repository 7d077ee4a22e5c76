#pragma once

#include <cstddef>
#include <vector>

#include "forsim/dynamics.hpp"
#include "forsim/scenario.hpp"
#include "forsim/state.hpp"

namespace forsim {

// Full world at one (real or virtual) timestep. Agent 0 of the history
// table is the center agent; agent k >= 1 is others[k - 1].
struct WorldState {
  Agent center;
  std::vector<Agent> others;
  std::vector<ControlInput> other_controls;        // last control applied to each other agent
  std::vector<std::vector<AgentState>> histories;  // oldest first, current state last
  int step = 0;

  std::size_t agent_count() const { return others.size() + 1; }

  const Agent& agent(std::size_t k) const { return k == 0 ? center : others[k - 1]; }

  static WorldState from_scenario(const Scenario& s) {
    WorldState w;
    w.center = s.center;
    w.others = s.others;
    w.other_controls.assign(s.others.size(), ControlInput{});
    w.histories.resize(w.agent_count());
    for (std::size_t k = 0; k < w.agent_count(); ++k) w.histories[k].push_back(w.agent(k).state);
    return w;
  }

  // Appends the current states to the history windows, keeping at most h.
  void record_history(int h) {
    if (histories.size() != agent_count()) histories.resize(agent_count());
    for (std::size_t k = 0; k < agent_count(); ++k) {
      auto& win = histories[k];
      win.push_back(agent(k).state);
      while (static_cast<int>(win.size()) > h) win.erase(win.begin());
    }
  }

  bool valid() const {
    if (!center.state.finite()) return false;
    for (const auto& o : others) {
      if (!o.state.finite()) return false;
    }
    return step >= 0;
  }
};

}  // namespace forsim
