#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "forsim/collision.hpp"
#include "forsim/config.hpp"
#include "forsim/error.hpp"
#include "forsim/random.hpp"
#include "forsim/scenario.hpp"
#include "forsim/world_state.hpp"

namespace forsim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Distributional statistics
// ---------------------------------------------------------------------------

// Inverse standard normal CDF (Wichura, AS 241, PPND16).
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

// Shapiro-Wilk W with Royston's approximation of the coefficients.
inline double shapiro_wilk(std::vector<double> x) {
  const std::size_t n = x.size();
  if (n < 3 || n > 5000) throw DegenerateSample("shapiro_wilk: need 3 <= n <= 5000");
  std::sort(x.begin(), x.end());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  if (!(ss > 0.0) || (x.back() - x.front()) <= 1e-12 * std::max(1.0, std::abs(mean))) {
    throw DegenerateSample("shapiro_wilk: zero variance");
  }

  std::vector<double> a(n);
  if (n == 3) {
    a[0] = -std::sqrt(0.5);
    a[1] = 0.0;
    a[2] = std::sqrt(0.5);
  } else {
    const double dn = static_cast<double>(n);
    std::vector<double> m(n);
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (dn + 0.25));
      m2 += m[i] * m[i];
    }
    const double u = 1.0 / std::sqrt(dn);
    auto poly = [u](const std::array<double, 6>& c) {
      double acc = 0.0;
      for (int k = 5; k >= 0; --k) acc = acc * u + c[static_cast<std::size_t>(k)];
      return acc;
    };
    const double rm = std::sqrt(m2);
    const double an = m[n - 1] / rm + poly({0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056});
    double phi;
    if (n > 5) {
      const double an1 = m[n - 2] / rm + poly({0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633});
      phi = (m2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) / (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      for (std::size_t i = 2; i + 2 < n; ++i) a[i] = m[i] / std::sqrt(phi);
      a[n - 2] = an1;
      a[1] = -an1;
    } else {
      phi = (m2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
      for (std::size_t i = 1; i + 1 < n; ++i) a[i] = m[i] / std::sqrt(phi);
    }
    a[n - 1] = an;
    a[0] = -an;
  }
  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i) num += a[i] * (x[i] - mean);
  return std::min(1.0, num * num / ss);
}

// W1 between two empirical distributions, integrating the distance between
// their quantile functions.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("wasserstein_1d: samples must be non-empty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    return s / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double qa = static_cast<double>(i + 1) / na;
    const double qb = static_cast<double>(j + 1) / nb;
    const double next = std::min(qa, qb);
    total += (next - q) * std::abs(a[i] - b[j]);
    q = next;
    if (qa <= next) ++i;
    if (qb <= next) ++j;
  }
  return total;
}

// Truncated normal(6, 2) on [0, 15], the default realism reference for speeds.
inline std::vector<double> default_reference_speeds(std::size_t n = 1000) {
  Rng rng(0x5eed5eedULL);
  std::vector<double> out;
  while (out.size() < n) {
    const double v = 6.0 + 2.0 * rng.normal();
    if (v >= 0.0 && v <= 15.0) out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surrogate safety measures
// ---------------------------------------------------------------------------

struct MovingBox {
  ObbShape box;
  Vec2 velocity;
};

// Earliest t >= 0 at which the translating boxes overlap: exact swept SAT,
// since every projected center distance is linear in t.
inline double ttc_2d(const MovingBox& ego, const MovingBox& other, double horizon = 20.0) {
  const Vec2 d0 = other.box.center - ego.box.center;
  const Vec2 vr = other.velocity - ego.velocity;
  double lo = 0.0;
  double hi = horizon;
  for (const auto& b : {ego.box, other.box}) {
    for (const Vec2 axis : b.axes()) {
      const double r = ego.box.radius_along(axis) + other.box.radius_along(axis);
      const double p = d0.dot(axis);
      const double rate = vr.dot(axis);
      if (rate == 0.0) {
        if (std::abs(p) > r) return kInf;
        continue;
      }
      double t0 = (-r - p) / rate;
      double t1 = (r - p) / rate;
      if (t0 > t1) std::swap(t0, t1);
      lo = std::max(lo, t0);
      hi = std::min(hi, t1);
      if (lo > hi) return kInf;
    }
  }
  return lo;
}

// Boundary distance over its closing rate under current velocities. An
// approximation of anticipated collision time; infinite when not closing.
inline double act(const MovingBox& ego, const MovingBox& other) {
  const auto cp = obb_closest_points(ego.box, other.box);
  if (cp.distance <= 0.0) return 0.0;
  const Vec2 dir = (cp.on_b - cp.on_a) * (1.0 / cp.distance);
  const double closing = -dir.dot(other.velocity - ego.velocity);
  if (closing <= 0.0) return kInf;
  return cp.distance / closing;
}

// ---------------------------------------------------------------------------
// Episode report
// ---------------------------------------------------------------------------

struct MetricReport {
  double s_sw = 1.0;
  double s_wd = 0.0;
  double a_sw = 1.0;
  double cpk = 0.0;
  double rp = 0.0;
  double ttc_2d = kInf;
  double act = kInf;
  double orr = 0.0;
  double uc = 0.0;

  static constexpr const char* kCsvHeader = "s_sw,s_wd,a_sw,cpk,rp,ttc_2d,act,orr,uc";

  std::array<double, 9> values() const { return {s_sw, s_wd, a_sw, cpk, rp, ttc_2d, act, orr, uc}; }
};

// Corners and edge midpoints of the box all inside the drivable area.
inline bool box_on_road(const ObbShape& box, const VectorMap& map) {
  const auto c = box.corners();
  for (int k = 0; k < 4; ++k) {
    if (!map.drivable(c[static_cast<std::size_t>(k)])) return false;
    if (!map.drivable((c[static_cast<std::size_t>(k)] + c[static_cast<std::size_t>((k + 1) % 4)]) * 0.5)) return false;
  }
  return true;
}

inline double shapiro_or_one(const std::vector<double>& x) {
  try {
    return shapiro_wilk(x);
  } catch (const DegenerateSample&) {
    return 1.0;  // constant or too-short series
  }
}

inline constexpr double kMinCpkDistanceKm = 1e-3;

inline MetricReport episode_metrics(const std::vector<WorldState>& episode, const VectorMap& map,
                                    const Polyline& route, const SimConfig& cfg) {
  const std::size_t n = episode.size();
  if (n < 3) throw EpisodeTooShort("episode_metrics: at least 3 states required");
  MetricReport r;

  std::vector<double> speed(n);
  for (std::size_t t = 0; t < n; ++t) speed[t] = std::max(0.0, episode[t].center.state.speed());
  std::vector<double> accel;
  for (std::size_t t = 1; t + 1 < n; ++t) accel.push_back((speed[t + 1] - speed[t - 1]) / (2.0 * cfg.dt));

  r.s_sw = shapiro_or_one(speed);
  r.a_sw = shapiro_or_one(accel);
  r.s_wd = wasserstein_1d(speed, cfg.metrics.reference_speeds.empty() ? default_reference_speeds()
                                                                       : cfg.metrics.reference_speeds);

  int collisions = 0;
  double meters = 0.0;
  std::vector<bool> touching(episode.front().others.size(), false);
  const double s0 = route.project(episode.front().center.state.position()).arc_length;
  double s_max = s0;
  int off_road = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const WorldState& w = episode[t];
    const ObbShape ego = obb_of(w.center.state, w.center.shape);
    if (t > 0) meters += distance(w.center.state.position(), episode[t - 1].center.state.position());
    s_max = std::max(s_max, route.project(w.center.state.position()).arc_length);
    if (!box_on_road(ego, map)) ++off_road;
    for (std::size_t k = 0; k < w.others.size() && k < touching.size(); ++k) {
      const ObbShape other = obb_of(w.others[k].state, w.others[k].shape);
      const bool hit = obb_overlap(ego, other);
      if (hit && !touching[k]) ++collisions;  // rising edge
      touching[k] = hit;
      const MovingBox me{ego, w.center.state.velocity()};
      const MovingBox them{other, w.others[k].state.velocity()};
      r.ttc_2d = std::min(r.ttc_2d, ttc_2d(me, them, cfg.metrics.ttc_horizon));
      r.act = std::min(r.act, act(me, them));
    }
  }
  r.cpk = collisions == 0 ? 0.0 : collisions / std::max(meters / 1000.0, kMinCpkDistanceKm);
  r.rp = s_max - s0;
  r.orr = 100.0 * off_road / static_cast<double>(n);
  int harsh = 0;
  for (double a : accel) harsh += std::abs(a) > cfg.metrics.comfort_accel;
  r.uc = 100.0 * harsh / static_cast<double>(accel.size());
  return r;
}

// Share (percent) of agent-timesteps in which another agent's box leaves the road.
inline double others_off_road_rate(const std::vector<WorldState>& episode, const VectorMap& map) {
  int off = 0, total = 0;
  for (const auto& w : episode) {
    for (const auto& o : w.others) {
      off += box_on_road(obb_of(o.state, o.shape), map) ? 0 : 1;
      ++total;
    }
  }
  return total == 0 ? 0.0 : 100.0 * off / total;
}

}  // namespace forsim
