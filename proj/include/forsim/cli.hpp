#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "forsim/agents.hpp"
#include "forsim/config.hpp"
#include "forsim/error.hpp"
#include "forsim/io.hpp"
#include "forsim/metrics.hpp"
#include "forsim/optimization.hpp"
#include "forsim/policy.hpp"
#include "forsim/rollout.hpp"
#include "forsim/scenario.hpp"
#include "forsim/selection.hpp"
#include "forsim/simulation.hpp"

namespace forsim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

struct RunManifest {
  std::string command;
  std::vector<std::string> scenario_paths;
  std::string config_path;
  std::string center = "trajectory-aligned";
  std::string others = "stepwise-prediction";
  std::uint64_t seed = 0;
  std::string out = ".";
  std::optional<int> iterations;
  std::string checkpoint_path;
  std::string episode_path;
};

// Everything the outputs depend on: flags, config and the bytes of every
// input file. The output directory is excluded.
inline nlohmann::json manifest_json(const RunManifest& m, const SimConfig& cfg) {
  nlohmann::json scen = nlohmann::json::array();
  for (const auto& p : m.scenario_paths) scen.push_back({{"path", p}, {"content_fnv", hex64(fnv1a64(read_file(p)))}});
  nlohmann::json j = {{"command", m.command},      {"scenarios", scen}, {"center_paradigm", m.center},
                      {"others_paradigm", m.others}, {"seed", m.seed},   {"config", cfg}};
  if (m.iterations) j["iterations"] = *m.iterations;
  if (!m.checkpoint_path.empty()) j["checkpoint_fnv"] = hex64(fnv1a64(read_file(m.checkpoint_path)));
  if (!m.episode_path.empty()) j["episode_fnv"] = hex64(fnv1a64(read_file(m.episode_path)));
  return j;
}

namespace detail {

struct Session {
  RunManifest manifest;
  SimConfig cfg;
  std::vector<Scenario> scenarios;
  std::filesystem::path out;
  std::string hash;
  std::optional<Checkpoint> checkpoint;

  ScoringParams theta() const {
    ScoringParams p;
    p.theta = checkpoint ? checkpoint->policy_theta : cfg.initial_theta;
    return p;
  }

  PredictorParams predictor(const SimConfig& timed) const {
    if (checkpoint) {
      auto p = predictor_from_weights(checkpoint->predictor_w);
      if (p.horizon == timed.horizon) return p;
    }
    return pretrained_predictor(timed);
  }

  std::ofstream open(const std::string& name) const {
    auto f = open_output(out / name);
    return f;
  }
};

inline Session open_session(const RunManifest& m) {
  Session s;
  s.manifest = m;
  if (!m.config_path.empty()) {
    try {
      s.cfg = nlohmann::json::parse(read_file(m.config_path)).get<SimConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("config " + m.config_path + ": " + e.what());
    }
  }
  if (m.iterations) s.cfg.iterations = *m.iterations;
  s.cfg.validate();
  parse_center_paradigm(m.center);
  parse_others_paradigm(m.others);
  for (const auto& p : m.scenario_paths) s.scenarios.push_back(load_scenario(p));
  if (!m.checkpoint_path.empty()) s.checkpoint = load_checkpoint(m.checkpoint_path);
  if (!m.episode_path.empty()) read_file(m.episode_path);
  s.out = m.out;
  std::filesystem::create_directories(s.out);
  const auto mj = manifest_json(m, s.cfg);
  s.hash = hex64(fnv1a64(mj.dump()));
  auto f = s.open("manifest.json");
  f << nlohmann::json{{"manifest_hash", s.hash}, {"manifest", mj}}.dump(2) << '\n';
  return s;
}

inline void require_scenarios(const Session& s, std::size_t min_count = 1) {
  if (s.scenarios.size() < min_count) throw ValidationError("--scenario is required");
}

inline MetricReport safe_metrics(const std::vector<WorldState>& states, const Scenario& sc, const SimConfig& cfg) {
  try {
    return episode_metrics(states, sc.map, sc.center_route(), cfg);
  } catch (const EpisodeTooShort&) {
    MetricReport r;
    for (double* v : {&r.s_sw, &r.s_wd, &r.a_sw, &r.cpk, &r.rp, &r.ttc_2d, &r.act, &r.orr, &r.uc}) *v = std::nan("");
    return r;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_simulate(const RunManifest& m, std::ostream& log) {
  auto s = detail::open_session(m);
  detail::require_scenarios(s);
  auto metrics = s.open("metrics.csv");
  write_header_comment(metrics, s.hash);
  metrics << MetricReport::kCsvHeader << '\n';
  for (std::size_t k = 0; k < s.scenarios.size(); ++k) {
    const Scenario& sc = s.scenarios[k];
    const SimConfig cfg = apply_scenario_timing(s.cfg, sc);
    const Episode ep = run_episode(sc, s.theta(), cfg, cfg.effective_episode_steps());
    char name[32];
    std::snprintf(name, sizeof name, "episode_%03zu.jsonl", k);
    auto f = s.open(name);
    write_header_comment(f, s.hash);
    for (const auto& w : ep.states) f << episode_line(w).dump() << '\n';
    metrics << metrics_csv_row(detail::safe_metrics(ep.states, sc, cfg)) << '\n';
    if (ep.truncated) log << "scenario " << k << ": episode stopped early: " << ep.reason << '\n';
  }
  return kExitOk;
}

inline int cmd_rollout(const RunManifest& m, std::ostream& log) {
  auto s = detail::open_session(m);
  detail::require_scenarios(s);
  auto branches_out = s.open("branches.jsonl");
  auto metrics = s.open("metrics.csv");
  write_header_comment(branches_out, s.hash);
  write_header_comment(metrics, s.hash);
  metrics << MetricReport::kCsvHeader << '\n';
  for (std::size_t k = 0; k < s.scenarios.size(); ++k) {
    const Scenario& sc = s.scenarios[k];
    const SimConfig cfg = apply_scenario_timing(s.cfg, sc);
    const PredictorParams pred = s.predictor(cfg);
    const RolloutContext ctx{&sc,
                             LatticePolicy::from_config(cfg),
                             s.theta(),
                             &pred,
                             cfg,
                             parse_center_paradigm(m.center),
                             parse_others_paradigm(m.others)};
    const WorldState real = WorldState::from_scenario(sc);
    const auto cands = regenerate(ctx, real, nullptr);
    auto branches = forward_simulate(ctx, real, cands, derive_seed(m.seed, k));
    int failed = 0;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      score_branch(branches[b], sc.map, sc.center_route(), cfg.reward, cfg.dt);
      auto j = branch_json(branches[b], static_cast<int>(b));
      j["scenario"] = k;
      j["return"] = branch_return(branches[b], cfg.reward, cfg.gamma);
      branches_out << j.dump() << '\n';
      metrics << metrics_csv_row(detail::safe_metrics(branches[b].states, sc, cfg)) << '\n';
      failed += branches[b].failed ? 1 : 0;
    }
    if (failed > 0) log << "scenario " << k << ": " << failed << " failed branches\n";
  }
  return kExitOk;
}

inline int cmd_train(const RunManifest& m, std::ostream& log) {
  auto s = detail::open_session(m);
  detail::require_scenarios(s);
  TrainOptions opt;
  opt.center = parse_center_paradigm(m.center);
  opt.others = parse_others_paradigm(m.others);
  opt.seed = m.seed;
  opt.start_iteration = s.checkpoint ? s.checkpoint->iteration : 0;
  const SimConfig timed = apply_scenario_timing(s.cfg, s.scenarios.front());
  const auto res = train(s.scenarios, s.cfg, opt, s.theta(), s.predictor(timed));
  auto ck = s.open("checkpoint.json");
  ck << checkpoint_json({res.theta.theta, res.predictor.w, res.iteration}).dump(2) << '\n';
  auto csv = s.open("train_log.csv");
  write_header_comment(csv, s.hash);
  write_train_log(csv, res.log);
  for (const auto& r : res.log) {
    if (r.failed_branches > 0) log << "iteration " << r.iteration << ": " << r.failed_branches << " failed branches\n";
  }
  return kExitOk;
}

inline int cmd_metrics(const RunManifest& m, std::ostream&) {
  if (m.episode_path.empty()) throw ValidationError("--episode is required");
  auto s = detail::open_session(m);
  detail::require_scenarios(s);
  const Scenario& sc = s.scenarios.front();
  const SimConfig cfg = apply_scenario_timing(s.cfg, sc);
  const auto episode = parse_episode(read_file(m.episode_path), sc);
  const auto report = episode_metrics(episode, sc.map, sc.center_route(), cfg);
  auto f = s.open("metrics.csv");
  write_header_comment(f, s.hash);
  f << MetricReport::kCsvHeader << '\n' << metrics_csv_row(report) << '\n';
  return kExitOk;
}

// One cell of the comparison matrix.
struct CompareRow {
  std::string center;
  std::string others;
  MetricReport metrics;
  double dispersion = 0.0;
  double others_orr = 0.0;
  double drift_events = 0.0;
  int failed = 0;
};

inline constexpr const char* kCompareHeader = "center,others,s_sw,s_wd,a_sw,cpk,rp,ttc_2d,act,orr,uc,dispersion,others_orr,drift_events";

namespace detail {

inline MetricReport zero_report() {
  MetricReport r;
  r.s_sw = r.a_sw = 0.0;
  return r;
}

// Means over branches then scenarios; TTC and ACT keep the minimum.
struct CellAccumulator {
  MetricReport sum = zero_report();
  double ttc = kInf, act_min = kInf;
  double dispersion = 0.0, others_orr = 0.0, drift = 0.0;
  int scenarios = 0;
  int failed = 0;

  void add(const std::vector<RolloutBranch>& branches, const Scenario& sc, const SimConfig& cfg) {
    MetricReport mean = zero_report();
    double orr_o = 0.0, drift_sum = 0.0;
    for (const auto& b : branches) {
      const auto r = safe_metrics(b.states, sc, cfg);
      mean.s_sw += r.s_sw;
      mean.s_wd += r.s_wd;
      mean.a_sw += r.a_sw;
      mean.cpk += r.cpk;
      mean.rp += r.rp;
      mean.orr += r.orr;
      mean.uc += r.uc;
      ttc = std::min(ttc, r.ttc_2d);
      act_min = std::min(act_min, r.act);
      orr_o += others_off_road_rate(b.states, sc.map);
      drift_sum += modality_drift_events(b, sc.map);
      failed += b.failed ? 1 : 0;
    }
    const double n = static_cast<double>(branches.size());
    sum.s_sw += mean.s_sw / n;
    sum.s_wd += mean.s_wd / n;
    sum.a_sw += mean.a_sw / n;
    sum.cpk += mean.cpk / n;
    sum.rp += mean.rp / n;
    sum.orr += mean.orr / n;
    sum.uc += mean.uc / n;
    others_orr += orr_o / n;
    drift += drift_sum;
    dispersion += branch_dispersion(branches);
    ++scenarios;
  }

  CompareRow row(std::string center, std::string others) const {
    const double n = std::max(1, scenarios);
    CompareRow r{std::move(center), std::move(others), {}, dispersion / n, others_orr / n, drift / n, failed};
    r.metrics = {sum.s_sw / n, sum.s_wd / n, sum.a_sw / n, sum.cpk / n, sum.rp / n, ttc, act_min, sum.orr / n, sum.uc / n};
    return r;
  }
};

}  // namespace detail

inline std::vector<CompareRow> compare_matrix(const std::vector<Scenario>& scenarios, const SimConfig& base,
                                              const ScoringParams& theta,
                                              const std::function<PredictorParams(const SimConfig&)>& predictor_for,
                                              OthersParadigm baseline_others, std::uint64_t seed) {
  const CenterParadigm centers[] = {CenterParadigm::MaxLikelihood, CenterParadigm::ModeConsistent,
                                    CenterParadigm::TrajectoryAligned};
  const OthersParadigm others[] = {OthersParadigm::ConstantAction, OthersParadigm::SinglePrediction,
                                   OthersParadigm::StepwisePrediction};
  std::vector<detail::CellAccumulator> cells(11);
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const Scenario& sc = scenarios[k];
    const SimConfig cfg = apply_scenario_timing(base, sc);
    const PredictorParams pred = predictor_for(cfg);
    const WorldState real = WorldState::from_scenario(sc);
    RolloutContext ctx{&sc, LatticePolicy::from_config(cfg), theta, &pred, cfg, CenterParadigm::MaxLikelihood,
                       baseline_others};
    const auto cands = regenerate(ctx, real, nullptr);
    int cell = 0;
    for (auto c : centers) {
      for (auto o : others) {
        ctx.center = c;
        ctx.others = o;
        cells[static_cast<std::size_t>(cell++)].add(forward_simulate(ctx, real, cands, derive_seed(seed, k)), sc, cfg);
      }
    }
    ctx.others = baseline_others;
    for (auto mode : {TrackingBaseline::PerfectTracking, TrackingBaseline::TrajectoryTracking}) {
      std::vector<RolloutBranch> branches(static_cast<std::size_t>(cands.size()));
      parallel_for(cands.size(), [&](int g) {
        branches[static_cast<std::size_t>(g)] = tracking_branch(ctx, real, cands, cands.grid(g), mode);
      });
      cells[static_cast<std::size_t>(cell++)].add(branches, sc, cfg);
    }
  }
  std::vector<CompareRow> rows;
  int cell = 0;
  for (auto c : centers) {
    for (auto o : others) rows.push_back(cells[static_cast<std::size_t>(cell++)].row(std::string(to_string(c)), std::string(to_string(o))));
  }
  rows.push_back(cells[static_cast<std::size_t>(cell++)].row("perfect-tracking", std::string(to_string(baseline_others))));
  rows.push_back(cells[static_cast<std::size_t>(cell++)].row("trajectory-tracking", std::string(to_string(baseline_others))));
  return rows;
}

inline int cmd_compare(const RunManifest& m, std::ostream& log) {
  auto s = detail::open_session(m);
  detail::require_scenarios(s);
  const auto rows = compare_matrix(
      s.scenarios, s.cfg, s.theta(), [&](const SimConfig& c) { return s.predictor(c); },
      parse_others_paradigm(m.others), m.seed);
  auto f = s.open("compare.csv");
  write_header_comment(f, s.hash);
  f << kCompareHeader << '\n';
  for (const auto& r : rows) {
    f << r.center << ',' << r.others << ',' << metrics_csv_row(r.metrics) << ',' << fmt_num(r.dispersion) << ','
      << fmt_num(r.others_orr) << ',' << fmt_num(r.drift_events) << '\n';
    if (r.failed > 0) log << r.center << "/" << r.others << ": " << r.failed << " failed branches\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"forsim: stepwise forward simulation for traffic agents"};
  app.require_subcommand(1);
  RunManifest m;
  std::string center = m.center, others = m.others;
  int iterations = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", m.scenario_paths, "scenario JSON (repeatable)");
    sub->add_option("--config", m.config_path, "config JSON");
    sub->add_option("--center-paradigm", center, "max-likelihood | mode-consistent | trajectory-aligned");
    sub->add_option("--others-paradigm", others, "constant-action | single-prediction | stepwise-prediction");
    sub->add_option("--seed", m.seed, "RNG seed");
    sub->add_option("--out", m.out, "output directory");
    sub->add_option("--iterations", iterations, "training iterations");
    sub->add_option("--checkpoint", m.checkpoint_path, "checkpoint to start from");
  };
  auto* simulate = app.add_subcommand("simulate", "closed-loop real-time episode per scenario");
  auto* rollout = app.add_subcommand("rollout", "forward-simulate all branches from each scenario state");
  auto* trainc = app.add_subcommand("train", "closed-loop policy optimization");
  auto* metrics = app.add_subcommand("metrics", "metric report of a recorded episode");
  auto* compare = app.add_subcommand("compare", "paradigm ablation matrix");
  for (auto* sub : {simulate, rollout, trainc, metrics, compare}) add_common(sub);
  metrics->add_option("--episode", m.episode_path, "episode JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  m.center = center;
  m.others = others;
  if (iterations >= 0) m.iterations = iterations;

  try {
    if (*simulate) return m.command = "simulate", cmd_simulate(m, err);
    if (*rollout) return m.command = "rollout", cmd_rollout(m, err);
    if (*trainc) return m.command = "train", cmd_train(m, err);
    if (*metrics) return m.command = "metrics", cmd_metrics(m, err);
    if (*compare) return m.command = "compare", cmd_compare(m, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace forsim
