// Forward-simulates one scenario under every center paradigm and prints
// per-branch terminal positions, dispersion and drift counts.
//
//   paradigms [scenario.json]
#include <cstdio>
#include <exception>

#include "forsim/forsim.hpp"

using namespace forsim;

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : std::string(FORSIM_FIXTURE_DIR) + "/multimodal.json";
  try {
    const Scenario sc = load_scenario(path);
    const SimConfig cfg = apply_scenario_timing(SimConfig{}, sc);
    const PredictorParams& pred = pretrained_predictor(cfg);
    for (auto center : {CenterParadigm::MaxLikelihood, CenterParadigm::ModeConsistent, CenterParadigm::TrajectoryAligned}) {
      const RolloutContext ctx{&sc, LatticePolicy::from_config(cfg), ScoringParams{cfg.initial_theta}, &pred, cfg,
                               center, OthersParadigm::StepwisePrediction};
      const WorldState w = WorldState::from_scenario(sc);
      const auto branches = forward_simulate(ctx, w, regenerate(ctx, w, nullptr), 0);
      int drift = 0;
      std::printf("%s\n", std::string(to_string(center)).c_str());
      for (const auto& b : branches) {
        const auto& end = b.states.back().center.state;
        drift += modality_drift_events(b, sc.map);
        std::printf("  seed (%d,%d) -> (%7.2f, %6.2f)%s\n", b.seed.i, b.seed.j, end.x, end.y, b.failed ? " failed" : "");
      }
      std::printf("  dispersion %.3f, drift events %d\n", branch_dispersion(branches), drift);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
