#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"

using namespace forsim;

namespace {

// Written out case by case, independently of dual_clip's min/max form.
double piecewise_dual_clip(double rho, double adv, double eps, double c) {
  if (adv >= 0.0) return rho >= 1.0 + eps ? (1.0 + eps) * adv : rho * adv;
  const double lifted = rho < 1.0 - eps ? 1.0 - eps : rho;
  return lifted < c ? lifted * adv : c * adv;
}

double ppo_clip(double rho, double adv, double eps) {
  const double unclipped = rho * adv;
  double clipped = rho;
  if (clipped < 1.0 - eps) clipped = 1.0 - eps;
  if (clipped > 1.0 + eps) clipped = 1.0 + eps;
  clipped *= adv;
  return unclipped < clipped ? unclipped : clipped;
}

Transition random_transition(Rng& rng, int g, const std::vector<double>& theta_old) {
  Transition tr;
  tr.candidates.n_ref = 1;
  tr.candidates.n_lon = g;
  std::vector<double> returns;
  for (int k = 0; k < g; ++k) {
    std::vector<double> f(kNumFeatures);
    for (double& v : f) v = rng.uniform(-1, 1);
    tr.candidates.features.push_back(f);
    tr.candidates.scores.push_back(std::inner_product(f.begin(), f.end(), theta_old.begin(), 0.0));
    returns.push_back(rng.uniform(-5, 5));
  }
  tr.candidates.trajectories.resize(static_cast<std::size_t>(g));
  tr.advantages = group_advantages(returns).advantages;
  return tr;
}

std::vector<double> random_theta(Rng& rng) {
  std::vector<double> t(kNumFeatures);
  for (double& v : t) v = rng.uniform(-1, 1);
  return t;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& v) {
  std::vector<const Transition*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

// Smallest distance from any ratio to a kink of psi.
double kink_distance(const std::vector<Transition>& batch, const std::vector<double>& theta, double eps, double c) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& tr : batch) {
    const auto lp_new = log_softmax(linear_scores(tr.candidates.features, theta));
    const auto lp_old = log_softmax(tr.candidates.scores);
    for (std::size_t i = 0; i < tr.advantages.size(); ++i) {
      const double rho = std::exp(lp_new[i] - lp_old[i]);
      d = std::min({d, std::abs(rho - (1 - eps)), std::abs(rho - (1 + eps)), std::abs(rho - c)});
    }
  }
  return d;
}

RolloutBranch branch_with_rewards(std::vector<double> r) {
  RolloutBranch b;
  b.rewards = std::move(r);
  return b;
}

}  // namespace

TEST(StepReward, Examples) {
  RewardConfig rc;
  EXPECT_DOUBLE_EQ(step_reward(StepEvents{1.0, false, false, false}, rc), 1.0);
  EXPECT_DOUBLE_EQ(step_reward(StepEvents{0.5, true, false, false}, rc), -9.5);
  EXPECT_EQ(step_reward(StepEvents{}, rc), 0.0);
  EXPECT_DOUBLE_EQ(step_reward(StepEvents{0.0, false, true, true}, rc), -2.5);
}

TEST(StepReward, FromWorldStates) {
  const Scenario s = test::parallel_road(1);
  const RewardConfig rc;
  WorldState a = WorldState::from_scenario(s);
  a.center.state = AgentState::from_angle(10, 0, 0, 5);
  WorldState b = a;
  b.center.state = AgentState::from_angle(11, 0, 0, 5);
  EXPECT_NEAR(step_reward(b, a, s.map, s.center_route(), rc, 0.1), 1.0, 1e-12);
  EXPECT_EQ(step_reward(a, a, s.map, s.center_route(), rc, 0.1), 0.0);

  // Half a meter of progress into a stopped car.
  WorldState hit = b;
  hit.center.state = AgentState::from_angle(10.5, 0, 0, 5);
  hit.others.push_back(test::car(12, 0, 0, 0));
  EXPECT_NEAR(step_reward(hit, a, s.map, s.center_route(), rc, 0.1), -9.5, 1e-12);

  // Braking at 5 m/s^2 is harsh under the 2.4 threshold.
  WorldState brake = b;
  brake.center.state = AgentState::from_angle(11, 0, 0, 4.5);
  EXPECT_NEAR(step_reward(brake, a, s.map, s.center_route(), rc, 0.1), 1.0 - rc.w_comfort, 1e-12);
}

TEST(BranchReturn, Examples) {
  RewardConfig rc;
  EXPECT_DOUBLE_EQ(branch_return(branch_with_rewards({1, 1, 1}), rc, 0.5), 1.75);
  EXPECT_EQ(branch_return(branch_with_rewards({0, 0, 0, 0}), rc, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(branch_return(branch_with_rewards(std::vector<double>(5, 2.5)), rc, 1.0), 12.5);
  auto failed = branch_with_rewards({1, 1});
  failed.failed = true;
  EXPECT_EQ(branch_return(failed, rc, 0.9), rc.failure_reward);
}

TEST(GroupAdvantages, Examples) {
  const auto g = group_advantages({1, 2, 3});
  EXPECT_NEAR(g.advantages[0], -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(g.advantages[1], 0.0, 1e-12);
  EXPECT_NEAR(g.advantages[2], std::sqrt(1.5), 1e-12);
  EXPECT_DOUBLE_EQ(g.mean, 2.0);
  EXPECT_NEAR(g.std, std::sqrt(2.0 / 3.0), 1e-15);
  for (double a : group_advantages({4, 4, 4, 4}).advantages) EXPECT_EQ(a, 0.0);
  EXPECT_THROW(group_advantages({1}), GroupTooSmall);
  EXPECT_THROW(group_advantages({}), GroupTooSmall);
  const auto two = group_advantages({0, 1});
  EXPECT_DOUBLE_EQ(two.advantages[0], -1.0);
  EXPECT_DOUBLE_EQ(two.advantages[1], 1.0);
}

TEST(GroupAdvantages, StandardizedAndAffineInvariant) {
  Rng rng(31);
  for (int n = 0; n < 10000; ++n) {
    const int g = 2 + static_cast<int>(rng.index(15));
    std::vector<double> r(static_cast<std::size_t>(g));
    for (double& v : r) v = rng.uniform(-100, 100);
    const auto a = group_advantages(r).advantages;
    double mean = 0.0, ss = 0.0;
    for (double v : a) mean += v;
    mean /= g;
    for (double v : a) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(ss / g), 1.0, 1e-9);
    const double scale = rng.uniform(0.01, 100), shift = rng.uniform(-1000, 1000);
    for (double& v : r) v = scale * v + shift;
    const auto b = group_advantages(r).advantages;
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
  }
}

TEST(DualClip, Examples) {
  EXPECT_DOUBLE_EQ(dual_clip(1.5, 1.0, 0.2, 3.0), 1.2);
  EXPECT_DOUBLE_EQ(dual_clip(5.0, -1.0, 0.2, 3.0), -3.0);
  for (double a : {-4.0, -0.3, 0.0, 0.7, 12.0}) EXPECT_EQ(dual_clip(1.0, a, 0.2, 3.0), a);
}

TEST(DualClip, MatchesPiecewiseOracleAndPpo) {
  Rng rng(32);
  for (int n = 0; n < 100000; ++n) {
    const double rho = std::exp(rng.uniform(-3, 3));
    const double adv = rng.uniform(-5, 5);
    const double eps = rng.uniform(0.01, 0.5);
    const double c = 1.0 + eps + rng.uniform(0.01, 5);
    const double psi = dual_clip(rho, adv, eps, c);
    EXPECT_EQ(psi, piecewise_dual_clip(rho, adv, eps, c));
    if (adv >= 0.0) EXPECT_EQ(psi, ppo_clip(rho, adv, eps));
    EXPECT_LE(psi, std::max({rho * adv, (1 + eps) * adv, c * adv}));
    if (adv < 0.0) EXPECT_GE(psi, c * adv);
  }
}

TEST(DualClip, SlopeMatchesFiniteDifferencesAwayFromKinks) {
  Rng rng(33);
  for (int n = 0; n < 10000; ++n) {
    const double rho = std::exp(rng.uniform(-2, 2)), adv = rng.uniform(-5, 5);
    const double eps = 0.2, c = 3.0, h = 1e-7;
    if (std::min({std::abs(rho - 0.8), std::abs(rho - 1.2), std::abs(rho - 3.0)}) < 1e-4) continue;
    const double fd = (dual_clip(rho + h, adv, eps, c) - dual_clip(rho - h, adv, eps, c)) / (2 * h);
    EXPECT_NEAR(dual_clip_slope(rho, adv, eps, c), fd, 1e-6);
  }
  // Ties take the clipped branch, whose slope is zero.
  EXPECT_EQ(dual_clip_slope(1.2, 1.0, 0.2, 3.0), 0.0);
  EXPECT_EQ(dual_clip_slope(3.0, -1.0, 0.2, 3.0), 0.0);
}

TEST(PolicyObjective, OnPolicyValueIsZero) {
  Rng rng(34);
  const auto theta = random_theta(rng);
  std::vector<Transition> batch;
  for (int k = 0; k < 8; ++k) batch.push_back(random_transition(rng, 12, theta));
  const auto obj = policy_objective(pointers(batch), ScoringParams{theta}, 0.2, 3.0);
  EXPECT_NEAR(obj.value, 0.0, 1e-9);

  // At theta_old every ratio is 1, strictly inside the clip band.
  std::vector<double> expect(kNumFeatures, 0.0);
  for (const auto& tr : batch) {
    for (std::size_t i = 0; i < tr.advantages.size(); ++i) {
      for (int d = 0; d < kNumFeatures; ++d) {
        expect[static_cast<std::size_t>(d)] += tr.advantages[i] * tr.candidates.features[i][static_cast<std::size_t>(d)] / 12.0 / 8.0;
      }
    }
  }
  for (int d = 0; d < kNumFeatures; ++d) EXPECT_NEAR(obj.grad[static_cast<std::size_t>(d)], expect[static_cast<std::size_t>(d)], 1e-12);
}

TEST(PolicyObjective, ZeroAdvantagesGiveZeroGradient) {
  Rng rng(35);
  const auto theta_old = random_theta(rng);
  std::vector<Transition> batch;
  for (int k = 0; k < 4; ++k) {
    batch.push_back(random_transition(rng, 6, theta_old));
    std::fill(batch.back().advantages.begin(), batch.back().advantages.end(), 0.0);
  }
  const auto obj = policy_objective(pointers(batch), ScoringParams{random_theta(rng)}, 0.2, 3.0);
  EXPECT_EQ(obj.value, 0.0);
  for (double g : obj.grad) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(policy_objective({}, ScoringParams{theta_old}, 0.2, 3.0).value, 0.0);
}

TEST(PolicyObjective, GradientMatchesCentralDifferences) {
  Rng rng(36);
  int checked = 0;
  while (checked < 50) {
    const auto theta_old = random_theta(rng);
    std::vector<Transition> batch;
    for (int k = 0; k < 3; ++k) batch.push_back(random_transition(rng, 8, theta_old));
    auto theta = theta_old;
    for (double& v : theta) v += rng.uniform(-0.4, 0.4);
    if (kink_distance(batch, theta, 0.2, 3.0) < 1e-3) continue;
    ++checked;
    const auto obj = policy_objective(pointers(batch), ScoringParams{theta}, 0.2, 3.0);
    double max_diff = 0.0, max_ref = 0.0;
    for (int d = 0; d < kNumFeatures; ++d) {
      const double h = 1e-6;
      auto a = theta, b = theta;
      a[static_cast<std::size_t>(d)] += h;
      b[static_cast<std::size_t>(d)] -= h;
      const double fd = (policy_objective(pointers(batch), ScoringParams{a}, 0.2, 3.0).value -
                         policy_objective(pointers(batch), ScoringParams{b}, 0.2, 3.0).value) / (2 * h);
      max_diff = std::max(max_diff, std::abs(fd - obj.grad[static_cast<std::size_t>(d)]));
      max_ref = std::max(max_ref, std::abs(fd));
    }
    if (max_ref == 0.0) {
      EXPECT_EQ(max_diff, 0.0);
    } else {
      EXPECT_LT(max_diff / max_ref, 1e-4);
    }
  }
}

TEST(RolloutBuffer, FifoEvictionAndDistinctSamples) {
  RolloutBuffer buf(3);
  for (int k = 0; k < 5; ++k) {
    Transition t;
    t.executed = {k, 0};
    buf.push(t);
  }
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf[0].executed.i, 2);
  EXPECT_EQ(buf[2].executed.i, 4);
  Rng rng(37);
  auto idx = buf.sample(10, rng);
  EXPECT_EQ(idx.size(), 3u);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2}));
}

namespace {

Scenario short_bandit() { return load_scenario(test::fixture("bandit.json")); }

// Few real-time steps per episode keep the runs short.
SimConfig short_training(int iterations) {
  SimConfig cfg;
  cfg.iterations = iterations;
  cfg.episode_steps = 4;
  return cfg;
}

double free_lane_mass(const std::vector<double>& p) {
  // Rows are ordered right to left; the free lane is the last row.
  double m = 0.0;
  for (std::size_t k = p.size() - 4; k < p.size(); ++k) m += p[k];
  return m;
}

}  // namespace

TEST(Train, ZeroIterationsIsNoOp) {
  const Scenario s = short_bandit();
  const SimConfig cfg = short_training(0);
  const ScoringParams theta{cfg.initial_theta};
  const auto timed = apply_scenario_timing(cfg, s);
  const auto& pred = pretrained_predictor(timed);
  const auto res = train({s}, cfg, {}, theta, pred);
  EXPECT_EQ(res.theta.theta, theta.theta);
  EXPECT_EQ(res.predictor.w, pred.w);
  EXPECT_TRUE(res.log.empty());
}

TEST(Train, BanditShiftsMassToTheFreeLaneDeterministically) {
  const Scenario s = short_bandit();
  const SimConfig cfg = short_training(6);
  TrainOptions opt;
  opt.seed = 4;
  const ScoringParams theta{cfg.initial_theta};
  const auto timed = apply_scenario_timing(cfg, s);
  const double initial = free_lane_mass(detail::initial_probabilities(s, theta, timed));
  const auto a = train({s}, cfg, opt, theta, pretrained_predictor(timed));
  const auto b = train({s}, cfg, opt, theta, pretrained_predictor(timed));
  ASSERT_EQ(a.log.size(), 6u);
  EXPECT_GT(free_lane_mass(a.log.back().probabilities), initial);
  EXPECT_GT(free_lane_mass(a.log.back().probabilities), free_lane_mass(a.log.front().probabilities));
  EXPECT_EQ(a.theta.theta, b.theta.theta);
  EXPECT_EQ(a.predictor.w, b.predictor.w);
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    EXPECT_EQ(a.log[k].mean_return, b.log[k].mean_return);
    EXPECT_EQ(a.log[k].objective, b.log[k].objective);
    EXPECT_EQ(a.log[k].probabilities, b.log[k].probabilities);
  }
  EXPECT_EQ(a.iteration, 6);
}

TEST(Train, RejectsMixedTiming) {
  Scenario a = short_bandit(), b = short_bandit();
  b.dt = 0.2;
  SimConfig cfg;
  EXPECT_THROW(train({a, b}, cfg, {}, ScoringParams{cfg.initial_theta}, PredictorParams{}), ValidationError);
  EXPECT_THROW(train({}, cfg, {}, ScoringParams{cfg.initial_theta}, PredictorParams{}), ValidationError);
}
