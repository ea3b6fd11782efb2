#pragma once

/**
 * @file
 * @brief JSON scenario configuration. Missing keys keep defaults; unknown keys are errors.
 */

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include "delayguard/errors.hpp"
#include "delayguard/robots.hpp"

namespace delayguard {

namespace detail {

using json = nlohmann::json;

inline void require_object(const json & j, const std::string & where, std::initializer_list<const char *> keys)
{
  if (!j.is_object()) { throw ConfigError(where + ": expected a table"); }
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto & item : j.items()) {
    if (!allowed.count(item.key())) { throw ConfigError(where + ": unknown key '" + item.key() + "'"); }
  }
}

inline double number(const json & j, const std::string & where)
{
  if (!j.is_number()) { throw ConfigError(where + ": expected a number"); }
  return j.get<double>();
}

inline void read(const json & j, const char * key, const std::string & where, double & out)
{
  if (j.contains(key)) { out = number(j.at(key), where + "." + key); }
}

inline void read(const json & j, const char * key, const std::string & where, bool & out)
{
  if (!j.contains(key)) { return; }
  if (!j.at(key).is_boolean()) { throw ConfigError(where + "." + key + ": expected true or false"); }
  out = j.at(key).get<bool>();
}

inline void read(const json & j, const char * key, const std::string & where, std::size_t & out)
{
  if (!j.contains(key)) { return; }
  const auto & v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) { throw ConfigError(where + "." + key + ": expected a positive integer"); }
  out = v.get<std::size_t>();
}

inline Eigen::Vector2d point(const json & j, const std::string & where)
{
  if (!j.is_array() || j.size() != 2) { throw ConfigError(where + ": expected [x, y]"); }
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]")};
}

inline Eigen::Matrix2d matrix2(const json & j, const std::string & where)
{
  if (!j.is_array() || j.size() != 2) { throw ConfigError(where + ": expected a 2x2 array"); }
  Eigen::Matrix2d m;
  for (int r = 0; r < 2; ++r) {
    const auto row = point(j[static_cast<std::size_t>(r)], where);
    m(r, 0) = row(0);
    m(r, 1) = row(1);
  }
  return m;
}

inline json point_json(const Eigen::Vector2d & p) { return json::array({p(0), p(1)}); }

inline json matrix_json(const Eigen::Matrix2d & m)
{
  return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})});
}

inline const char * placement_name(DelayPlacement p)
{
  switch (p) {
    case DelayPlacement::mixed: return "mixed";
    case DelayPlacement::current: return "current";
    case DelayPlacement::delayed: return "delayed";
  }
  return "?";
}

}  // namespace detail

/// Overlay a parsed JSON document on the built-in defaults.
inline ScenarioConfig parse_config(const nlohmann::json & doc, ScenarioConfig cfg = default_scenario())
{
  using detail::read;
  using detail::require_object;
  require_object(doc, "config", {"scenario", "gains", "qp", "sliding", "simulation"});

  if (doc.contains("scenario")) {
    const auto & s = doc["scenario"];
    require_object(s, "scenario", {"robots", "obstacles", "P", "Q", "delta", "delay_placement", "interpolation"});
    if (s.contains("robots")) {
      const auto & rs = s["robots"];
      if (!rs.is_array() || rs.empty()) { throw ConfigError("scenario.robots: expected a non-empty list"); }
      cfg.starts.clear();
      cfg.targets.clear();
      cfg.start_headings.clear();
      cfg.sigma.clear();
      cfg.robots.clear();
      for (std::size_t i = 0; i < rs.size(); ++i) {
        const std::string where = "scenario.robots[" + std::to_string(i) + "]";
        const auto & r = rs[i];
        require_object(r, where, {"start", "target", "heading", "sigma", "wheel_radius", "body_radius", "coupling", "softening"});
        if (!r.contains("start") || !r.contains("target")) { throw ConfigError(where + ": start and target are required"); }
        cfg.starts.push_back(detail::point(r["start"], where + ".start"));
        cfg.targets.push_back(detail::point(r["target"], where + ".target"));
        double heading = 0.0;
        double sigma = 0.1;
        RobotParams params;
        read(r, "heading", where, heading);
        read(r, "sigma", where, sigma);
        read(r, "wheel_radius", where, params.wheel_radius);
        read(r, "body_radius", where, params.body_radius);
        read(r, "coupling", where, params.coupling);
        read(r, "softening", where, params.softening);
        cfg.start_headings.push_back(heading);
        cfg.sigma.push_back(sigma);
        cfg.robots.push_back(params);
      }
    }
    if (s.contains("obstacles")) {
      const auto & os = s["obstacles"];
      if (!os.is_array()) { throw ConfigError("scenario.obstacles: expected a list"); }
      cfg.obstacles.clear();
      for (std::size_t k = 0; k < os.size(); ++k) {
        const std::string where = "scenario.obstacles[" + std::to_string(k) + "]";
        require_object(os[k], where, {"center", "radius"});
        if (!os[k].contains("center") || !os[k].contains("radius")) { throw ConfigError(where + ": center and radius are required"); }
        cfg.obstacles.push_back({detail::point(os[k]["center"], where + ".center"), detail::number(os[k]["radius"], where + ".radius")});
      }
    }
    if (s.contains("P")) { cfg.P = detail::matrix2(s["P"], "scenario.P"); }
    if (s.contains("Q")) { cfg.Q = detail::matrix2(s["Q"], "scenario.Q"); }
    read(s, "delta", "scenario", cfg.delta);
    if (s.contains("delay_placement")) {
      const auto v = s["delay_placement"].is_string() ? s["delay_placement"].get<std::string>() : std::string();
      if (v == "mixed") {
        cfg.placement = DelayPlacement::mixed;
      } else if (v == "current") {
        cfg.placement = DelayPlacement::current;
      } else if (v == "delayed") {
        cfg.placement = DelayPlacement::delayed;
      } else {
        throw ConfigError("scenario.delay_placement: expected mixed, current or delayed");
      }
    }
    if (s.contains("interpolation")) {
      const auto v = s["interpolation"].is_string() ? s["interpolation"].get<std::string>() : std::string();
      if (v == "cubic-hermite") {
        cfg.interpolation = Interpolation::cubic_hermite;
      } else if (v == "linear") {
        cfg.interpolation = Interpolation::linear;
      } else {
        throw ConfigError("scenario.interpolation: expected cubic-hermite or linear");
      }
    }
  }
  if (doc.contains("gains")) {
    const auto & g = doc["gains"];
    require_object(g, "gains", {"rho_bar", "gamma_bar", "eta_bar", "chi_bar"});
    read(g, "rho_bar", "gains", cfg.rho_bar);
    read(g, "gamma_bar", "gains", cfg.gamma_bar);
    read(g, "eta_bar", "gains", cfg.eta_bar);
    read(g, "chi_bar", "gains", cfg.chi_bar);
  }
  if (doc.contains("qp")) {
    const auto & q = doc["qp"];
    require_object(q, "qp", {"margin", "aggregate_barriers", "pairwise_clearance"});
    read(q, "margin", "qp", cfg.qp_margin);
    read(q, "aggregate_barriers", "qp", cfg.aggregate_barriers);
    read(q, "pairwise_clearance", "qp", cfg.pairwise_clearance);
  }
  if (doc.contains("sliding")) {
    const auto & s = doc["sliding"];
    require_object(s, "sliding", {"weight", "gain", "boundary_layer", "g_tol", "barrier_decay", "target_level"});
    read(s, "weight", "sliding", cfg.sliding.weight);
    read(s, "gain", "sliding", cfg.sliding.gain);
    read(s, "boundary_layer", "sliding", cfg.sliding.boundary_layer);
    read(s, "g_tol", "sliding", cfg.sliding.g_tol);
    read(s, "barrier_decay", "sliding", cfg.sliding.barrier_decay);
    read(s, "target_level", "sliding", cfg.sliding.target_level);
  }
  if (doc.contains("simulation")) {
    const auto & s = doc["simulation"];
    require_object(s, "simulation", {"dt", "horizon", "stride", "goal_radius"});
    read(s, "dt", "simulation", cfg.dt);
    read(s, "horizon", "simulation", cfg.horizon);
    read(s, "stride", "simulation", cfg.stride);
    read(s, "goal_radius", "simulation", cfg.goal_radius);
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig parse_config_text(const std::string & text)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error & e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline ScenarioConfig load_config(const std::string & path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot open config file '" + path + "'"); }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline nlohmann::json config_to_json(const ScenarioConfig & cfg)
{
  using detail::json;
  json robots = json::array();
  for (std::size_t i = 0; i < cfg.robot_count(); ++i) {
    robots.push_back({
      {"start", detail::point_json(cfg.starts[i])},
      {"target", detail::point_json(cfg.targets[i])},
      {"heading", cfg.start_headings[i]},
      {"sigma", cfg.sigma[i]},
      {"wheel_radius", cfg.robots[i].wheel_radius},
      {"body_radius", cfg.robots[i].body_radius},
      {"coupling", cfg.robots[i].coupling},
      {"softening", cfg.robots[i].softening},
    });
  }
  json obstacles = json::array();
  for (const auto & o : cfg.obstacles) { obstacles.push_back({{"center", detail::point_json(o.center)}, {"radius", o.radius}}); }
  return {
    {"scenario",
     {{"robots", robots},
      {"obstacles", obstacles},
      {"P", detail::matrix_json(cfg.P)},
      {"Q", detail::matrix_json(cfg.Q)},
      {"delta", cfg.delta},
      {"delay_placement", detail::placement_name(cfg.placement)},
      {"interpolation", cfg.interpolation == Interpolation::linear ? "linear" : "cubic-hermite"}}},
    {"gains", {{"rho_bar", cfg.rho_bar}, {"gamma_bar", cfg.gamma_bar}, {"eta_bar", cfg.eta_bar}, {"chi_bar", cfg.chi_bar}}},
    {"qp", {{"margin", cfg.qp_margin}, {"aggregate_barriers", cfg.aggregate_barriers}, {"pairwise_clearance", cfg.pairwise_clearance}}},
    {"sliding",
     {{"weight", cfg.sliding.weight},
      {"gain", cfg.sliding.gain},
      {"boundary_layer", cfg.sliding.boundary_layer},
      {"g_tol", cfg.sliding.g_tol},
      {"barrier_decay", cfg.sliding.barrier_decay},
      {"target_level", cfg.sliding.target_level}}},
    {"simulation", {{"dt", cfg.dt}, {"horizon", cfg.horizon}, {"stride", cfg.stride}, {"goal_radius", cfg.goal_radius}}},
  };
}

}  // namespace delayguard
