#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>

#include "forsim/error.hpp"
#include "forsim/state.hpp"

namespace forsim {

enum class CenterParadigm { MaxLikelihood, ModeConsistent, TrajectoryAligned };

inline std::string_view to_string(CenterParadigm p) {
  switch (p) {
    case CenterParadigm::MaxLikelihood: return "max-likelihood";
    case CenterParadigm::ModeConsistent: return "mode-consistent";
    case CenterParadigm::TrajectoryAligned: return "trajectory-aligned";
  }
  return "?";
}

inline CenterParadigm parse_center_paradigm(std::string_view s) {
  if (s == "max-likelihood") return CenterParadigm::MaxLikelihood;
  if (s == "mode-consistent") return CenterParadigm::ModeConsistent;
  if (s == "trajectory-aligned") return CenterParadigm::TrajectoryAligned;
  throw ValidationError("unknown center paradigm: " + std::string(s));
}

// Per-branch selection rule. `seed` is the index chosen for the transition
// from the real state to the first virtual state; `reference` is the seed
// candidate as generated at the real state.
struct SelectionParadigm {
  CenterParadigm tag = CenterParadigm::MaxLikelihood;
  GridIndex seed;
  Trajectory reference;
};

// Argmax of the scores, lowest flat index on ties.
inline GridIndex select_max_likelihood(const CandidateSet& cands) {
  cands.check_dense();
  int best = 0;
  for (int k = 1; k < cands.size(); ++k) {
    if (cands.scores[static_cast<std::size_t>(k)] > cands.scores[static_cast<std::size_t>(best)]) best = k;
  }
  return cands.grid(best);
}

inline GridIndex select_mode_consistent(const SelectionParadigm& par) { return par.seed; }

// Mean position distance between candidate points k and reference points
// t + k, over the overlap window k = 0 .. T - t - 1.
inline double ade_aligned(const Trajectory& candidate, const Trajectory& reference, int virtual_step) {
  if (virtual_step < 0) throw EmptyOverlap("ade_aligned: negative virtual step");
  const auto t = static_cast<std::size_t>(virtual_step);
  if (t >= reference.size()) throw EmptyOverlap("ade_aligned: virtual step beyond the reference");
  const std::size_t window = std::min(reference.size() - t, candidate.size());
  if (window == 0) throw EmptyOverlap("ade_aligned: empty candidate");
  double sum = 0.0;
  for (std::size_t k = 0; k < window; ++k) sum += distance(candidate[k].position(), reference[t + k].position());
  return sum / static_cast<double>(window);
}

// Argmin of the aligned ADE over the grid, lowest flat index on ties. The
// first virtual step uses the seed index.
inline GridIndex select_trajectory_aligned(const CandidateSet& cands, const SelectionParadigm& par,
                                           int virtual_step) {
  cands.check_dense();
  if (virtual_step <= 1) return par.seed;
  int best = 0;
  double best_ade = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cands.size(); ++k) {
    const double a = ade_aligned(cands.trajectories[static_cast<std::size_t>(k)], par.reference, virtual_step);
    if (a < best_ade) {
      best_ade = a;
      best = k;
    }
  }
  return cands.grid(best);
}

}  // namespace forsim
