#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forsim/agents.hpp"
#include "forsim/error.hpp"
#include "forsim/metrics.hpp"
#include "forsim/optimization.hpp"
#include "forsim/policy.hpp"
#include "forsim/rollout.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shortest round-trip-safe rendering is not needed; fixed precision keeps
// files diffable and stable.
inline std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline void write_header_comment(std::ostream& out, const std::string& manifest_hash) {
  out << "# manifest-hash: " << manifest_hash << '\n';
}

// Reads lines, skipping '#' comments and blanks.
inline std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

inline std::string metrics_csv_row(const MetricReport& r) {
  std::string s;
  for (double v : r.values()) {
    if (!s.empty()) s += ',';
    s += fmt_num(v);
  }
  return s;
}

// ---------------------------------------------------------------------------
// States, branches, episodes
// ---------------------------------------------------------------------------

inline nlohmann::json state_json(const AgentState& s) { return {s.x, s.y, s.cos_h, s.sin_h, s.vx, s.vy}; }

inline AgentState state_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 6) throw ParseError("state must have 6 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>(), j[4].get<double>(), j[5].get<double>()};
}

// Agent 0 is the center agent.
inline nlohmann::json world_tensor(const WorldState& w) {
  nlohmann::json row = nlohmann::json::array();
  row.push_back(state_json(w.center.state));
  for (const auto& o : w.others) row.push_back(state_json(o.state));
  return row;
}

inline nlohmann::json branch_json(const RolloutBranch& b, int flat_index) {
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& g : b.selected) sel.push_back({g.i, g.j});
  nlohmann::json states = nlohmann::json::array();
  for (const auto& w : b.states) states.push_back(world_tensor(w));
  nlohmann::json j = {{"branch", flat_index},
                      {"seed_index", {b.seed.i, b.seed.j}},
                      {"selected", sel},
                      {"selected_lines", b.selected_lines},
                      {"rewards", b.rewards},
                      {"failed", b.failed},
                      {"predictor_calls", b.predictor_calls},
                      {"states", states}};
  if (b.failed) j["failure"] = b.failure;
  return j;
}

inline nlohmann::json episode_line(const WorldState& w) { return {{"step", w.step}, {"states", world_tensor(w)}}; }

// Rebuilds an episode from JSONL lines; shapes come from the scenario.
inline std::vector<WorldState> parse_episode(const std::string& text, const Scenario& scenario) {
  std::vector<WorldState> out;
  for (const auto& line : data_lines(text)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("episode: ") + e.what());
    }
    if (!j.contains("states")) continue;  // header records
    WorldState w = WorldState::from_scenario(scenario);
    const auto& st = j.at("states");
    if (st.size() != w.agent_count()) throw ValidationError("episode: agent count differs from the scenario");
    w.center.state = state_from_json(st[0]);
    for (std::size_t k = 0; k < w.others.size(); ++k) w.others[k].state = state_from_json(st[k + 1]);
    w.step = j.value("step", static_cast<int>(out.size()));
    out.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::vector<double> policy_theta;
  std::vector<double> predictor_w;
  int iteration = 0;
};

inline nlohmann::json checkpoint_json(const Checkpoint& c) {
  return {{"policy_theta", c.policy_theta}, {"predictor_w", c.predictor_w}, {"iteration", c.iteration}};
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(read_file(p));
    c.policy_theta = j.at("policy_theta").get<std::vector<double>>();
    c.predictor_w = j.at("predictor_w").get<std::vector<double>>();
    c.iteration = j.at("iteration").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + p.string() + ": " + e.what());
  }
  if (c.policy_theta.size() != static_cast<std::size_t>(kNumFeatures)) {
    throw ValidationError("checkpoint: policy_theta must have " + std::to_string(kNumFeatures) + " entries");
  }
  if (c.predictor_w.size() % (2 * kPredictorFeatures) != 0) {
    throw ValidationError("checkpoint: predictor_w size is not a multiple of 2 x features");
  }
  return c;
}

inline PredictorParams predictor_from_weights(const std::vector<double>& w) {
  PredictorParams p;
  p.horizon = static_cast<int>(w.size() / (2 * kPredictorFeatures));
  p.w = w;
  return p;
}

// ---------------------------------------------------------------------------
// Training log
// ---------------------------------------------------------------------------

inline void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& rows) {
  out << "iteration,mean_return,objective,pred_loss,collapse_dispersion";
  const std::size_t g = rows.empty() ? 0 : rows.front().probabilities.size();
  for (std::size_t k = 0; k < g; ++k) out << ",p_" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << r.iteration << ',' << fmt_num(r.mean_return) << ',' << fmt_num(r.objective) << ','
        << fmt_num(r.pred_loss) << ',' << fmt_num(r.collapse_dispersion);
    for (double p : r.probabilities) out << ',' << fmt_num(p);
    out << '\n';
  }
}

}  // namespace forsim
