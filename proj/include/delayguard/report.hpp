#pragma once

/**
 * @file
 * @brief Telemetry CSV, trajectory SVG and run report.
 */

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "delayguard/config.hpp"
#include "delayguard/dde.hpp"
#include "delayguard/errors.hpp"
#include "delayguard/robots.hpp"
#include "delayguard/small_gain.hpp"

namespace delayguard {

inline constexpr const char * csv_header = "t,robot,x1,x2,x3,u1,u2,u3,V,U,W,minh,qp_active";

/// Shortest decimal that parses back to the same double; "nan", "inf", "-inf" otherwise.
inline std::string format_double(double v)
{
  if (std::isnan(v)) { return "nan"; }
  if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string & s)
{
  if (s == "nan") { return std::numeric_limits<double>::quiet_NaN(); }
  if (s == "inf") { return std::numeric_limits<double>::infinity(); }
  if (s == "-inf") { return -std::numeric_limits<double>::infinity(); }
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) { throw DomainError("csv: bad number '" + s + "'"); }
  return v;
}

struct CsvRow
{
  double t{0.0};
  std::size_t robot{1};
  Eigen::Vector3d x{Eigen::Vector3d::Zero()};
  Eigen::Vector3d u{Eigen::Vector3d::Zero()};
  double V{0.0};
  double U{0.0};
  double W{0.0};
  double minh{0.0};
  /// 1-based filter row indices.
  std::vector<std::size_t> qp_active;
};

/// One row per robot per telemetry sample; robots numbered from 1.
inline std::vector<CsvRow> telemetry_rows(const Scenario & sc, const Telemetry & tel)
{
  const double na = std::numeric_limits<double>::quiet_NaN();
  std::vector<CsvRow> rows;
  rows.reserve(tel.samples.size() * sc.robot_count());
  for (const auto & s : tel.samples) {
    for (std::size_t i = 0; i < sc.robot_count(); ++i) {
      CsvRow r;
      r.t = s.t;
      r.robot = i + 1;
      r.x = s.x.segment<3>(static_cast<Eigen::Index>(3 * i));
      r.minh = sc.min_h(s.x, i);
      if (s.decisions.size() == sc.robot_count()) {
        const auto & d = s.decisions[i];
        r.u = d.u.head<3>();
        r.V = d.V;
        r.U = d.U;
        r.W = d.W;
        for (auto k : d.active) { r.qp_active.push_back(k + 1); }
      } else {
        r.u.setConstant(na);
        r.V = na;
        r.U = na;
        r.W = na;
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

inline std::string write_csv(const std::vector<CsvRow> & rows)
{
  std::string out = csv_header;
  out += '\n';
  for (const auto & r : rows) {
    out += format_double(r.t);
    out += ',';
    out += std::to_string(r.robot);
    for (int k = 0; k < 3; ++k) { out += ',' + format_double(r.x(k)); }
    for (int k = 0; k < 3; ++k) { out += ',' + format_double(r.u(k)); }
    out += ',' + format_double(r.V);
    out += ',' + format_double(r.U);
    out += ',' + format_double(r.W);
    out += ',' + format_double(r.minh);
    out += ',';
    for (std::size_t k = 0; k < r.qp_active.size(); ++k) {
      if (k) { out += ';'; }
      out += std::to_string(r.qp_active[k]);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<CsvRow> read_csv(const std::string & text)
{
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header) { throw DomainError("csv: unexpected header"); }
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) { continue; }
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) { f.push_back(cell); }
    if (!line.empty() && line.back() == ',') { f.emplace_back(); }
    if (f.size() != 13) { throw DomainError("csv: expected 13 fields in '" + line + "'"); }
    CsvRow r;
    r.t = parse_double(f[0]);
    r.robot = static_cast<std::size_t>(std::stoul(f[1]));
    for (int k = 0; k < 3; ++k) {
      r.x(k) = parse_double(f[static_cast<std::size_t>(2 + k)]);
      r.u(k) = parse_double(f[static_cast<std::size_t>(5 + k)]);
    }
    r.V = parse_double(f[8]);
    r.U = parse_double(f[9]);
    r.W = parse_double(f[10]);
    r.minh = parse_double(f[11]);
    std::istringstream as(f[12]);
    while (std::getline(as, cell, ';')) {
      if (!cell.empty()) { r.qp_active.push_back(static_cast<std::size_t>(std::stoul(cell))); }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/**
 * @brief Safety and stabilization figures derived from telemetry rows alone.
 *
 * Time-to-ball is the first sample time after which robot i stays within `goal_radius`
 * of its target; null if it never settles.
 */
inline nlohmann::json telemetry_summary(
  const std::vector<CsvRow> & rows, const std::vector<Eigen::Vector2d> & targets, double goal_radius)
{
  using nlohmann::json;
  double min_h = std::numeric_limits<double>::infinity();
  const std::size_t p = targets.size();
  std::vector<double> final_dist(p, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::optional<double>> entry(p);
  for (const auto & r : rows) {
    if (r.robot < 1 || r.robot > p) { throw DomainError("telemetry: robot index out of range"); }
    min_h = std::min(min_h, r.minh);
    const std::size_t i = r.robot - 1;
    const double d = (r.x.head<2>() - targets[i]).norm();
    final_dist[i] = d;
    if (d <= goal_radius) {
      if (!entry[i]) { entry[i] = r.t; }
    } else {
      entry[i].reset();
    }
  }
  json robots = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    worst = std::max(worst, final_dist[i]);
    robots.push_back({
      {"robot", i + 1},
      {"final_distance", final_dist[i]},
      {"time_to_ball", entry[i] ? json(*entry[i]) : json(nullptr)},
    });
  }
  return {
    {"safety", {{"min_h", min_h}, {"violation", !(min_h > 0.0)}}},
    {"stabilization", {{"goal_radius", goal_radius}, {"max_final_distance", worst}, {"robots", robots}}},
  };
}

/// Largest value of a decision field over all samples and robots; null when never defined.
template<typename F>
nlohmann::json max_over(const Telemetry & tel, F && field)
{
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto & s : tel.samples) {
    for (const auto & d : s.decisions) {
      const double v = field(d);
      if (std::isnan(v)) { continue; }
      any = true;
      best = std::max(best, v);
    }
  }
  return any ? nlohmann::json(best) : nlohmann::json(nullptr);
}

inline nlohmann::json audit_json(const SurfaceAudit & audit)
{
  using nlohmann::json;
  json entries = json::array();
  for (const auto & e : audit.entries) {
    entries.push_back({
      {"robot", e.robot + 1},
      {"boundary_min_u2", e.boundary_min_u2},
      {"initial_u2", e.initial_u2},
      {"boundary_pass", e.boundary_pass},
      {"rays", e.rays},
      {"roots", e.roots},
      {"inconclusive", e.inconclusive},
      {"surface_min_h", std::isfinite(e.surface_min_h) ? json(e.surface_min_h) : json(nullptr)},
      {"surface_pass", e.surface_pass},
    });
  }
  return {{"pass", audit.pass()}, {"robots", entries}};
}

struct RunCounts
{
  std::size_t qp_infeasible{0};
  std::size_t sliding_degenerate{0};
};

inline RunCounts count_events(const Telemetry & tel)
{
  RunCounts c;
  for (const auto & s : tel.samples) {
    for (const auto & d : s.decisions) {
      c.qp_infeasible += d.infeasible ? 1 : 0;
      c.sliding_degenerate += d.branch == Branch::sliding_degenerate ? 1 : 0;
    }
  }
  return c;
}

/// report.json content. `audit` is included for the sliding stack.
inline nlohmann::json build_report(
  const Scenario & sc, ControllerKind kind, const Telemetry & tel, const std::vector<CsvRow> & rows,
  const std::optional<SurfaceAudit> & audit = std::nullopt)
{
  using nlohmann::json;
  json rep = telemetry_summary(rows, sc.cfg.targets, sc.cfg.goal_radius);
  rep["controller"] = to_string(kind);
  rep["status"] = to_string(tel.status);
  rep["message"] = tel.message;
  rep["steps"] = tel.steps;
  rep["safety"]["violation"] = rep["safety"]["violation"].get<bool>() || tel.status == RunStatus::safety_violation;
  const auto cert = check_small_gain(sc.gains);
  const auto bcert = check_small_gain(sc.barrier_gains);
  rep["certificate"] = {
    {"spectral_radius", cert.spectral_radius},
    {"pass", cert.pass},
    {"barrier_spectral_radius", bcert.spectral_radius},
    {"barrier_pass", bcert.pass},
  };
  const auto counts = count_events(tel);
  rep["events"] = {{"qp_infeasible", counts.qp_infeasible}, {"sliding_degenerate", counts.sliding_degenerate}};
  rep["residuals"] = {
    // inf_u of the Lyapunov inequality is -inf unless |b| = 0; then it equals a.
    {"clf_condition", max_over(tel, [](const ControlDecision & d) {
       return d.b_norm == 0.0 ? d.a : std::numeric_limits<double>::quiet_NaN();
     })},
    {"stabilizer_dissipation", max_over(tel, [](const ControlDecision & d) { return d.stabilizer_residual; })},
    {"barrier_condition", max_over(tel, [](const ControlDecision & d) { return d.barrier_residual; })},
    {"sliding_reaching", max_over(tel, [](const ControlDecision & d) { return d.sliding_residual; })},
  };
  if (audit) { rep["surface_audit"] = audit_json(*audit); }
  return rep;
}

/// Fixed 800x600 plot: filled obstacles, start dots, target crosses, one polyline per robot.
inline std::string write_svg(const ScenarioConfig & cfg, const std::vector<CsvRow> & rows, std::size_t max_points = 4000)
{
  const double width = 800.0;
  const double height = 600.0;
  const double pad = 30.0;
  double lo_x = std::numeric_limits<double>::infinity();
  double lo_y = lo_x;
  double hi_x = -lo_x;
  double hi_y = -lo_x;
  auto grow = [&](const Eigen::Vector2d & p, double r) {
    lo_x = std::min(lo_x, p(0) - r);
    hi_x = std::max(hi_x, p(0) + r);
    lo_y = std::min(lo_y, p(1) - r);
    hi_y = std::max(hi_y, p(1) + r);
  };
  for (const auto & o : cfg.obstacles) { grow(o.center, o.radius); }
  for (const auto & p : cfg.starts) { grow(p, 0.1); }
  for (const auto & p : cfg.targets) { grow(p, 0.1); }
  for (const auto & r : rows) {
    if (r.x.head<2>().allFinite()) { grow(r.x.head<2>(), 0.0); }
  }
  if (!std::isfinite(lo_x)) { lo_x = lo_y = -1.0; hi_x = hi_y = 1.0; }
  const double scale = std::min((width - 2 * pad) / std::max(hi_x - lo_x, 1e-9), (height - 2 * pad) / std::max(hi_y - lo_y, 1e-9));
  const double ox = pad + 0.5 * ((width - 2 * pad) - scale * (hi_x - lo_x));
  const double oy = pad + 0.5 * ((height - 2 * pad) - scale * (hi_y - lo_y));
  auto sx = [&](double x) { return format_double(std::round((ox + (x - lo_x) * scale) * 100.0) / 100.0); };
  auto sy = [&](double y) { return format_double(std::round((height - oy - (y - lo_y) * scale) * 100.0) / 100.0); };

  static const char * colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n";
  os << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
  for (const auto & o : cfg.obstacles) {
    os << "<circle cx=\"" << sx(o.center(0)) << "\" cy=\"" << sy(o.center(1)) << "\" r=\""
       << format_double(std::round(o.radius * scale * 100.0) / 100.0) << "\" fill=\"#555555\"/>\n";
  }
  const std::size_t p = cfg.robot_count();
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<const CsvRow *> mine;
    for (const auto & r : rows) {
      if (r.robot == i + 1 && r.x.head<2>().allFinite()) { mine.push_back(&r); }
    }
    const std::size_t every = std::max<std::size_t>(1, (mine.size() + max_points - 1) / max_points);
    os << "<polyline fill=\"none\" stroke=\"" << colours[i % 8] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < mine.size(); ++k) {
      if (k % every != 0 && k + 1 != mine.size()) { continue; }
      os << sx(mine[k]->x(0)) << ',' << sy(mine[k]->x(1)) << ' ';
    }
    os << "\"/>\n";
    os << "<circle cx=\"" << sx(cfg.starts[i](0)) << "\" cy=\"" << sy(cfg.starts[i](1)) << "\" r=\"5\" fill=\"" << colours[i % 8]
       << "\"/>\n";
    const double tx = std::round((ox + (cfg.targets[i](0) - lo_x) * scale) * 100.0) / 100.0;
    const double ty = std::round((height - oy - (cfg.targets[i](1) - lo_y) * scale) * 100.0) / 100.0;
    os << "<path d=\"M" << format_double(tx - 6) << ',' << format_double(ty - 6) << " L" << format_double(tx + 6) << ','
       << format_double(ty + 6) << " M" << format_double(tx - 6) << ',' << format_double(ty + 6) << " L" << format_double(tx + 6)
       << ',' << format_double(ty - 6) << "\" stroke=\"" << colours[i % 8] << "\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace delayguard
