#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forsim/collision.hpp"
#include "forsim/config.hpp"
#include "forsim/error.hpp"
#include "forsim/geometry.hpp"
#include "forsim/state.hpp"

namespace forsim {

struct VectorMap {
  std::vector<Polyline> reference_lines;
  std::vector<Polygon> drivable_area;
  std::vector<Polyline> routes;

  bool drivable(Vec2 p) const { return inside_any(drivable_area, p); }

  // Inside, or within tol of a drivable boundary.
  bool drivable(Vec2 p, double tol) const {
    if (drivable(p)) return true;
    for (const auto& g : drivable_area) {
      if (g.boundary_distance(p) <= tol) return true;
    }
    return false;
  }
};

struct Scenario {
  VectorMap map;
  Agent center;
  std::vector<Agent> others;
  int horizon = 40;
  double dt = 0.1;

  // Route of the center agent, or the reference line nearest to it.
  const Polyline& center_route() const {
    if (!map.routes.empty()) return map.routes.front();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < map.reference_lines.size(); ++k) {
      const double d = map.reference_lines[k].project(center.state.position()).distance;
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return map.reference_lines.at(best);
  }
};

inline constexpr int kScenarioVersion = 1;
inline constexpr double kRouteTolerance = 0.1;
inline constexpr double kUnitCircleTolerance = 1e-9;

// Checks every Scenario invariant, naming the first one violated.
inline void validate_scenario(const Scenario& s) {
  auto fail = [](const std::string& what) { throw ValidationError(what); };
  if (s.horizon < 2) fail("horizon: T >= 2");
  if (!(s.dt > 0.0 && s.dt <= 1.0)) fail("dt: must lie in (0, 1]");
  for (const auto& line : s.map.reference_lines) {
    if (line.size() < 2) fail("map.reference_lines: polyline needs >= 2 points");
  }
  for (const auto& route : s.map.routes) {
    if (route.size() < 2) fail("map.routes: polyline needs >= 2 points");
  }
  for (const auto& poly : s.map.drivable_area) {
    if (!poly.is_simple()) fail("map.drivable_area: polygon must be simple");
  }
  for (const auto& route : s.map.routes) {
    for (const Vec2 p : route.points()) {
      if (!s.map.drivable(p, kRouteTolerance)) fail("map.routes: route vertex outside drivable area");
    }
  }
  std::vector<const Agent*> all{&s.center};
  for (const auto& a : s.others) all.push_back(&a);
  for (const Agent* a : all) {
    if (!a->state.finite()) fail("agent state: all fields finite");
    const double n2 = a->state.cos_h * a->state.cos_h + a->state.sin_h * a->state.sin_h;
    if (std::abs(n2 - 1.0) > kUnitCircleTolerance) fail("agent state: cos^2 + sin^2 = 1");
    if (!(a->shape.length > 0.0 && a->shape.width > 0.0 && a->shape.wheelbase > 0.0)) {
      fail("agent geometry: length, width, wheelbase > 0");
    }
  }
  for (std::size_t p = 0; p < all.size(); ++p) {
    for (std::size_t q = p + 1; q < all.size(); ++q) {
      if (obb_overlap(obb_of(all[p]->state, all[p]->shape), obb_of(all[q]->state, all[q]->shape))) {
        fail("agents: bounding boxes overlap at t=0");
      }
    }
  }
}

namespace detail {

inline std::vector<Vec2> parse_points(const nlohmann::json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw ParseError("point must be [x, y]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

inline nlohmann::json dump_points(const std::vector<Vec2>& pts) {
  auto out = nlohmann::json::array();
  for (const Vec2 p : pts) out.push_back({p.x, p.y});
  return out;
}

inline Agent parse_agent(const nlohmann::json& j) {
  const auto& st = j.at("state");
  if (!st.is_array() || st.size() != 6) throw ParseError("agent state must have 6 numbers");
  Agent a;
  a.state = {st[0].get<double>(), st[1].get<double>(), st[2].get<double>(),
             st[3].get<double>(), st[4].get<double>(), st[5].get<double>()};
  // Decimal headings such as 0.7071 are snapped onto the unit circle.
  const double n = std::hypot(a.state.cos_h, a.state.sin_h);
  if (std::abs(n - 1.0) < 1e-3) a.state = normalized_heading(a.state);
  a.shape.length = j.at("length").get<double>();
  a.shape.width = j.at("width").get<double>();
  a.shape.wheelbase = j.at("wheelbase").get<double>();
  return a;
}

inline nlohmann::json dump_agent(const Agent& a) {
  const auto& s = a.state;
  return {{"state", {s.x, s.y, s.cos_h, s.sin_h, s.vx, s.vy}},
          {"length", a.shape.length},
          {"width", a.shape.width},
          {"wheelbase", a.shape.wheelbase}};
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  try {
    if (j.at("version").get<int>() != kScenarioVersion) throw ParseError("unsupported scenario version");
    s.dt = j.at("dt").get<double>();
    s.horizon = j.at("horizon").get<int>();
    const auto& m = j.at("map");
    for (const auto& l : m.at("reference_lines")) s.map.reference_lines.emplace_back(detail::parse_points(l));
    for (const auto& g : m.at("drivable_area")) s.map.drivable_area.emplace_back(detail::parse_points(g));
    for (const auto& r : m.value("routes", nlohmann::json::array())) s.map.routes.emplace_back(detail::parse_points(r));
    s.center = detail::parse_agent(j.at("center_agent"));
    for (const auto& a : j.value("other_agents", nlohmann::json::array())) s.others.push_back(detail::parse_agent(a));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  validate_scenario(s);
  return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json map;
  map["reference_lines"] = nlohmann::json::array();
  for (const auto& l : s.map.reference_lines) map["reference_lines"].push_back(detail::dump_points(l.points()));
  map["drivable_area"] = nlohmann::json::array();
  for (const auto& g : s.map.drivable_area) map["drivable_area"].push_back(detail::dump_points(g.points()));
  map["routes"] = nlohmann::json::array();
  for (const auto& r : s.map.routes) map["routes"].push_back(detail::dump_points(r.points()));
  nlohmann::json others = nlohmann::json::array();
  for (const auto& a : s.others) others.push_back(detail::dump_agent(a));
  return {{"version", kScenarioVersion},
          {"dt", s.dt},
          {"horizon", s.horizon},
          {"map", map},
          {"center_agent", detail::dump_agent(s.center)},
          {"other_agents", others}};
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scenario " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

inline void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << scenario_to_json(s).dump(2) << '\n';
}

// Horizon and dt come from the scenario.
inline SimConfig apply_scenario_timing(SimConfig cfg, const Scenario& s) {
  cfg.horizon = s.horizon;
  cfg.dt = s.dt;
  return cfg;
}

}  // namespace forsim
