#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace forsim;

namespace {

bool inside_box(const ObbShape& b, Vec2 p) {
  const Vec2 d = p - b.center;
  return std::abs(d.dot(b.heading)) <= b.half_length + 1e-12 && std::abs(d.dot(b.heading.perp())) <= b.half_width + 1e-12;
}

double orient(Vec2 a, Vec2 b, Vec2 c) { return (b - a).cross(c - a); }

bool segments_cross(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

// Convex polygons intersect iff a vertex lies inside the other or two edges cross.
bool polygon_oracle(const ObbShape& a, const ObbShape& b) {
  const auto ca = a.corners(), cb = b.corners();
  for (const auto& p : ca)
    if (inside_box(b, p)) return true;
  for (const auto& p : cb)
    if (inside_box(a, p)) return true;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])) return true;
  return false;
}

bool sampled_hit(const ObbShape& a, const ObbShape& b, int n) {
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double u = -1.0 + 2.0 * i / n, v = -1.0 + 2.0 * j / n;
      const Vec2 p = a.center + a.heading * (u * a.half_length) + a.heading.perp() * (v * a.half_width);
      if (inside_box(b, p)) return true;
    }
  }
  return false;
}

ObbShape box_at(double x, double y, double heading) {
  ObbShape b;
  b.center = {x, y};
  b.heading = {std::cos(heading), std::sin(heading)};
  return b;
}

MovingBox moving(double x, double y, double heading, double speed) {
  return {box_at(x, y, heading), Vec2{std::cos(heading), std::sin(heading)} * speed};
}

}  // namespace

// --- OBB -------------------------------------------------------------------

TEST(Obb, AgreesWithPolygonAndSamplingOracles) {
  Rng rng(17);
  int overlaps = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    ObbShape a = box_at(0.0, 0.0, rng.uniform(-3.2, 3.2));
    ObbShape b = box_at(rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-3.2, 3.2));
    a.half_length = rng.uniform(0.5, 3.0);
    a.half_width = rng.uniform(0.3, 1.5);
    b.half_length = rng.uniform(0.5, 3.0);
    b.half_width = rng.uniform(0.3, 1.5);
    const bool sat = obb_overlap(a, b);
    ASSERT_EQ(sat, polygon_oracle(a, b)) << "trial " << trial;
    if (sampled_hit(a, b, 40) || sampled_hit(b, a, 40)) ASSERT_TRUE(sat) << "trial " << trial;
    overlaps += sat;
  }
  EXPECT_GT(overlaps, 500);
  EXPECT_LT(overlaps, 4500);
}

TEST(Obb, IdenticalAndDistantBoxes) {
  EXPECT_TRUE(obb_overlap(box_at(3, 4, 0.7), box_at(3, 4, 0.7)));
  EXPECT_FALSE(obb_overlap(box_at(0, 0, 0.0), box_at(100, 0, 0.0)));
  EXPECT_TRUE(obb_overlap(box_at(0, 0, 0.0), box_at(4.5, 0, 0.0)));  // touching
  EXPECT_DOUBLE_EQ(obb_closest_points(box_at(0, 0, 0.0), box_at(10, 0, 0.0)).distance, 5.5);
}

// --- Shapiro-Wilk -----------------------------------------------------------

TEST(ShapiroWilk, ThreeEquallySpacedPointsGiveOne) {
  EXPECT_NEAR(shapiro_wilk({-1.0, 0.0, 1.0}), 1.0, 1e-9);
}

TEST(ShapiroWilk, MatchesReferenceImplementation) {
  struct Case {
    std::vector<double> x;
    double w;
  };
  std::vector<double> ramp;
  for (int k = 1; k <= 30; ++k) ramp.push_back(k);
  std::vector<double> two_point(500, 0.0);
  std::fill(two_point.begin() + 250, two_point.end(), 1.0);
  const std::vector<Case> cases = {
      {{2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 3.0}, 0.9713906031045022},
      {{0.5, 0.7, 0.2, 9.5, 0.1, 0.3, 0.9, 0.4, 0.6, 0.8, 0.2, 12.0}, 0.5426912935997132},
      {ramp, 0.9574505592737159},
      {{3.2, 1.0, 7.7}, 0.9622034867104884},
      {{4.0, 4.5, 3.1, 6.2, 5.0}, 0.9936262049468723},
      {two_point, 0.6365428322476134},
  };
  for (const auto& c : cases) EXPECT_NEAR(shapiro_wilk(c.x), c.w, 2e-4) << "n=" << c.x.size();
}

TEST(ShapiroWilk, NormalDrawsScoreHighTwoPointScoresLow) {
  Rng rng(3);
  std::vector<double> x(500);
  for (auto& v : x) v = rng.normal();
  EXPECT_GT(shapiro_wilk(x), 0.99);
  std::vector<double> two_point(500, 0.0);
  std::fill(two_point.begin() + 250, two_point.end(), 1.0);
  EXPECT_LT(shapiro_wilk(two_point), 0.8);
}

TEST(ShapiroWilk, ScaleAndShiftInvariant) {
  const std::vector<double> x = {2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 3.0};
  std::vector<double> y;
  for (double v : x) y.push_back(7.5 * v - 100.0);
  EXPECT_NEAR(shapiro_wilk(x), shapiro_wilk(y), 1e-9);
}

TEST(ShapiroWilk, DegenerateSamples) {
  EXPECT_THROW(shapiro_wilk({1.0, 2.0}), DegenerateSample);
  EXPECT_THROW(shapiro_wilk({4.0, 4.0, 4.0, 4.0}), DegenerateSample);
  EXPECT_DOUBLE_EQ(shapiro_or_one({4.0, 4.0, 4.0}), 1.0);
}

// --- Wasserstein ------------------------------------------------------------

TEST(Wasserstein, Examples) {
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0, 2.0}, {1.0, 3.0}), 1.0);
  EXPECT_NEAR(wasserstein_1d({0.0, 1.0, 5.0}, {2.0, 2.5}), 1.9166666666666667, 1e-12);
  EXPECT_DOUBLE_EQ(wasserstein_1d({1.0, 4.0, 2.0}, {4.0, 1.0, 2.0}), 0.0);
  EXPECT_THROW(wasserstein_1d({}, {1.0}), ValidationError);
}

TEST(Wasserstein, ShiftGivesAbsoluteOffset) {
  Rng rng(5);
  std::vector<double> a(37), b;
  for (auto& v : a) v = rng.normal();
  for (double c : {-3.0, 0.25, 11.0}) {
    b.clear();
    for (double v : a) b.push_back(v + c);
    EXPECT_NEAR(wasserstein_1d(a, b), std::abs(c), 1e-12);
  }
}

TEST(Wasserstein, SymmetricAndMatchesCdfIntegral) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(3 + trial % 7), b(2 + trial % 5);
    for (auto& v : a) v = rng.uniform(-5, 5);
    for (auto& v : b) v = rng.uniform(-5, 5);
    // Integral of |F_a - F_b| over the merged support.
    std::vector<double> all = a;
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    auto cdf = [](const std::vector<double>& s, double x) {
      return static_cast<double>(std::count_if(s.begin(), s.end(), [x](double v) { return v <= x; })) / s.size();
    };
    double oracle = 0.0;
    for (std::size_t k = 0; k + 1 < all.size(); ++k) oracle += std::abs(cdf(a, all[k]) - cdf(b, all[k])) * (all[k + 1] - all[k]);
    EXPECT_NEAR(wasserstein_1d(a, b), oracle, 1e-10);
    EXPECT_NEAR(wasserstein_1d(a, b), wasserstein_1d(b, a), 1e-12);
  }
}

// --- TTC / ACT --------------------------------------------------------------

TEST(Ttc, HeadOnClosingGap) {
  // 20 m between bumpers, 10 m/s closing.
  const MovingBox ego = moving(0.0, 0.0, 0.0, 5.0);
  const MovingBox other = moving(24.5, 0.0, std::numbers::pi, 5.0);
  EXPECT_NEAR(ttc_2d(ego, other), 2.0, 1e-3);
}

TEST(Ttc, ParallelOverlappingAndHorizon) {
  EXPECT_EQ(ttc_2d(moving(0, 0, 0, 10), moving(0, 3.5, 0, 10)), kInf);
  EXPECT_EQ(ttc_2d(moving(0, 0, 0, 10), moving(0, 3.5, 0, 12)), kInf);
  EXPECT_DOUBLE_EQ(ttc_2d(moving(0, 0, 0, 10), moving(1, 0.5, 0.3, 0)), 0.0);
  EXPECT_EQ(ttc_2d(moving(0, 0, 0, 1), moving(500, 0, 0, 0), 20.0), kInf);
}

TEST(Ttc, MatchesSteppedSimulation) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const MovingBox a = moving(0, 0, rng.uniform(-3, 3), rng.uniform(0, 12));
    const MovingBox b = moving(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-3, 3), rng.uniform(0, 12));
    const double ttc = ttc_2d(a, b, 10.0);
    double first = kInf;
    for (int k = 0; k <= 100000; ++k) {
      const double t = k * 1e-4;
      ObbShape pa = a.box, pb = b.box;
      pa.center = pa.center + a.velocity * t;
      pb.center = pb.center + b.velocity * t;
      if (polygon_oracle(pa, pb)) {
        first = t;
        break;
      }
    }
    if (std::isinf(first)) {
      EXPECT_TRUE(std::isinf(ttc) || ttc > 10.0 - 1e-3) << trial;
    } else {
      EXPECT_NEAR(ttc, first, 2e-4) << trial;
    }
  }
}

TEST(Ttc, MonotoneInGap) {
  double prev = -1.0;
  for (double gap = 0.5; gap <= 60.0; gap += 0.5) {
    const double t = ttc_2d(moving(0, 0, 0, 8), moving(4.5 + gap, 0, 0, 2), 100.0);
    EXPECT_GT(t, prev);
    EXPECT_NEAR(t, gap / 6.0, 1e-9);
    prev = t;
  }
}

TEST(Act, Examples) {
  EXPECT_NEAR(act(moving(0, 0, 0, 5), moving(24.5, 0, std::numbers::pi, 5)), 2.0, 1e-9);
  EXPECT_EQ(act(moving(0, 0, 0, 5), moving(24.5, 0, 0, 8)), kInf);
  EXPECT_EQ(act(moving(0, 0, 0, 5), moving(24.5, 0, 0, 5)), kInf);
  EXPECT_DOUBLE_EQ(act(moving(0, 0, 0, 5), moving(1, 0, 0, 5)), 0.0);
}

// --- Episode metrics --------------------------------------------------------

namespace {

struct EpisodeBench {
  Scenario scenario;
  SimConfig cfg;
  std::vector<WorldState> episode;
};

// Center drives along y = 0 at `speed`; `others` agents are parked far away.
EpisodeBench straight_episode(int states, double speed, int others = 0) {
  EpisodeBench e;
  e.scenario = test::parallel_road(3, speed);
  e.scenario.map.drivable_area = {test::rect(-20.0, 1000.0, -5.25, 5.25)};
  e.scenario.map.routes = {test::straight(0.0, 0.0, 1000.0)};
  for (int k = 0; k < others; ++k) e.scenario.others.push_back(test::car(-10.0, 3.5, 0.0, 0.0));
  e.cfg.dt = 0.1;
  WorldState w = WorldState::from_scenario(e.scenario);
  for (int t = 0; t < states; ++t) {
    w.center.state = AgentState::from_angle(speed * e.cfg.dt * t, 0.0, 0.0, speed);
    w.step = t;
    e.episode.push_back(w);
  }
  return e;
}

}  // namespace

TEST(EpisodeMetrics, CleanStraightEpisode) {
  auto e = straight_episode(31, 8.0, 1);
  const MetricReport r = episode_metrics(e.episode, e.scenario.map, e.scenario.center_route(), e.cfg);
  EXPECT_EQ(r.cpk, 0.0);
  EXPECT_EQ(r.orr, 0.0);
  EXPECT_EQ(r.uc, 0.0);
  EXPECT_NEAR(r.rp, 30 * 0.8, 1e-9);
  EXPECT_EQ(r.s_sw, 1.0);  // constant speed
  EXPECT_NEAR(r.s_wd, wasserstein_1d(std::vector<double>(31, 8.0), default_reference_speeds()), 1e-12);
  EXPECT_EQ(std::string(MetricReport::kCsvHeader), "s_sw,s_wd,a_sw,cpk,rp,ttc_2d,act,orr,uc");
}

TEST(EpisodeMetrics, CollisionsPerKilometre) {
  // 50 steps of 10 m = 500 m; the other agent sits on the ego box during two spans.
  auto e = straight_episode(51, 100.0, 1);
  for (int t = 0; t < 51; ++t) {
    const bool hit = (t >= 10 && t <= 12) || t == 30;
    auto& o = e.episode[t].others[0].state;
    o = hit ? AgentState::from_angle(e.episode[t].center.state.x, 0.5, 0.0, 0.0)
            : AgentState::from_angle(e.episode[t].center.state.x, 40.0, 0.0, 0.0);
  }
  const MetricReport r = episode_metrics(e.episode, e.scenario.map, e.scenario.center_route(), e.cfg);
  EXPECT_NEAR(r.cpk, 4.0, 1e-9);
  EXPECT_EQ(r.ttc_2d, 0.0);
  EXPECT_EQ(r.act, 0.0);
}

TEST(EpisodeMetrics, OffRoadRate) {
  auto e = straight_episode(30, 8.0);
  for (int t : {4, 5, 20}) e.episode[t].center.state.y = 6.0;
  const MetricReport r = episode_metrics(e.episode, e.scenario.map, e.scenario.center_route(), e.cfg);
  EXPECT_NEAR(r.orr, 10.0, 1e-12);
}

TEST(EpisodeMetrics, UncomfortableShare) {
  auto e = straight_episode(12, 5.0);
  const std::vector<double> v = {5, 5, 5, 5, 6, 7, 7, 7, 7, 7, 7, 7};
  for (int t = 0; t < 12; ++t) {
    auto& s = e.episode[t].center.state;
    s = AgentState::from_angle(s.x, 0.0, 0.0, v[t]);
  }
  // Central differences: 5, 10, 5 m/s^2 at t = 3, 4, 5; zero elsewhere.
  const MetricReport r = episode_metrics(e.episode, e.scenario.map, e.scenario.center_route(), e.cfg);
  EXPECT_NEAR(r.uc, 30.0, 1e-12);
}

TEST(EpisodeMetrics, RouteProgressNonDecreasingInPrefix) {
  auto e = straight_episode(40, 6.0);
  double prev = -1.0;
  for (std::size_t n = 3; n <= e.episode.size(); ++n) {
    std::vector<WorldState> prefix(e.episode.begin(), e.episode.begin() + static_cast<long>(n));
    const double rp = episode_metrics(prefix, e.scenario.map, e.scenario.center_route(), e.cfg).rp;
    EXPECT_GE(rp, prev);
    prev = rp;
  }
}

TEST(EpisodeMetrics, InvariantUnderRigidTransform) {
  auto e = straight_episode(40, 6.0, 1);
  Rng rng(2);
  for (int t = 0; t < 40; ++t) {
    auto& c = e.episode[t].center.state;
    const double v = 6.0 + rng.uniform(-2, 2);
    c = AgentState::from_angle(c.x, 0.3 * std::sin(0.2 * t), 0.05 * std::cos(0.2 * t), v);
    e.episode[t].others[0].state = AgentState::from_angle(30.0 - 0.5 * t, 1.0, std::numbers::pi, 5.0);
  }
  const double ang = 0.7;
  const Vec2 shift{123.0, -45.0};
  auto tf = [&](Vec2 p) {
    return Vec2{std::cos(ang) * p.x - std::sin(ang) * p.y, std::sin(ang) * p.x + std::cos(ang) * p.y} + shift;
  };
  auto tf_state = [&](AgentState s) {
    const Vec2 p = tf(s.position());
    return AgentState::from_angle(p.x, p.y, heading_angle(s) + ang, s.speed());
  };
  auto tf_line = [&](const Polyline& l) {
    std::vector<Vec2> pts;
    for (const auto& p : l.points()) pts.push_back(tf(p));
    return Polyline(pts);
  };
  VectorMap map2;
  for (const auto& l : e.scenario.map.reference_lines) map2.reference_lines.push_back(tf_line(l));
  for (const auto& g : e.scenario.map.drivable_area) {
    std::vector<Vec2> pts;
    for (const auto& p : g.points()) pts.push_back(tf(p));
    map2.drivable_area.emplace_back(pts);
  }
  const Polyline route2 = tf_line(e.scenario.center_route());
  auto ep2 = e.episode;
  for (auto& w : ep2) {
    w.center.state = tf_state(w.center.state);
    for (auto& o : w.others) o.state = tf_state(o.state);
  }
  const auto a = episode_metrics(e.episode, e.scenario.map, e.scenario.center_route(), e.cfg).values();
  const auto b = episode_metrics(ep2, map2, route2, e.cfg).values();
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::isinf(a[k])) {
      EXPECT_EQ(a[k], b[k]) << k;
    } else {
      EXPECT_NEAR(a[k], b[k], 1e-9 * std::max(1.0, std::abs(a[k]))) << k;
    }
  }
  EXPECT_LT(a[5], kInf);  // the oncoming agent gives a finite TTC
}

TEST(EpisodeMetrics, TooShortEpisode) {
  auto e = straight_episode(2, 6.0);
  EXPECT_THROW(episode_metrics(e.episode, e.scenario.map, e.scenario.center_route(), e.cfg), EpisodeTooShort);
}

TEST(EpisodeMetrics, OthersOffRoadRate) {
  auto e = straight_episode(10, 6.0, 2);
  for (int t = 0; t < 10; ++t) e.episode[t].others[1].state.y = t < 5 ? 20.0 : 3.5;
  EXPECT_NEAR(others_off_road_rate(e.episode, e.scenario.map), 25.0, 1e-12);
}
