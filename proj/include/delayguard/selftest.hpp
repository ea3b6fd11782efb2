#pragma once

/**
 * @file
 * @brief Quick oracle checks bundled with the command-line tool.
 */

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "delayguard/dde.hpp"
#include "delayguard/report.hpp"
#include "delayguard/robots.hpp"
#include "delayguard/small_gain.hpp"

namespace delayguard {

struct SelfCheck
{
  std::string name;
  bool pass{false};
  std::string detail;
};

namespace detail {

inline SystemModel scalar_model(std::function<double(const HistoryView &)> rhs)
{
  SystemModel m;
  m.layout = SubsystemLayout({1});
  m.input_dims = {1};
  m.drift = [rhs](const HistoryView & v) { return Eigen::VectorXd::Constant(1, rhs(v)); };
  m.input_map = [](const HistoryView &, std::size_t) { return Eigen::MatrixXd::Zero(1, 1); };
  return m;
}

inline double integrate_scalar(const SystemModel & m, HistoryBuffer phi, double dt, double t_end)
{
  const std::vector<Eigen::VectorXd> u{Eigen::VectorXd::Zero(1)};
  const auto n = static_cast<long>(std::llround(t_end / dt));
  for (long k = 0; k < n; ++k) { phi = integrate_step(std::move(phi), m, u, dt); }
  return phi.head()(0);
}

inline double max_abs_diff(const nlohmann::json & a, const nlohmann::json & b)
{
  if (a.is_number() && b.is_number()) { return std::abs(a.get<double>() - b.get<double>()); }
  if (a.is_object() && b.is_object() && a.size() == b.size()) {
    double m = 0.0;
    for (const auto & item : a.items()) {
      if (!b.contains(item.key())) { return INFINITY; }
      m = std::max(m, max_abs_diff(item.value(), b[item.key()]));
    }
    return m;
  }
  if (a.is_array() && b.is_array() && a.size() == b.size()) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) { m = std::max(m, max_abs_diff(a[k], b[k])); }
    return m;
  }
  return a == b ? 0.0 : INFINITY;
}

}  // namespace detail

/// Recompute the telemetry-derived report sections from CSV text; largest deviation from `report`.
inline double recompute_deviation(const nlohmann::json & report, const std::string & csv, const ScenarioConfig & cfg)
{
  const auto again = telemetry_summary(read_csv(csv), cfg.targets, cfg.goal_radius);
  return std::max(
    detail::max_abs_diff(report.at("safety"), again.at("safety")),
    detail::max_abs_diff(report.at("stabilization"), again.at("stabilization")));
}

inline std::vector<SelfCheck> run_selftest()
{
  std::vector<SelfCheck> out;
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> normal(0.0, 1.0);

  {
    double worst = 0.0;
    for (int s = 0; s < 10000; ++s) {
      const double a = 10.0 * normal(rng);
      Eigen::RowVectorXd b(3);
      for (int k = 0; k < 3; ++k) { b(k) = normal(rng); }
      const double lhs = a + b.dot(sontag_control(a, b).transpose());
      worst = std::max(worst, std::abs(lhs + std::sqrt(a * a + std::pow(b.squaredNorm(), 2))));
    }
    out.push_back({"sontag dissipation identity", worst <= 1e-10, "max error " + format_double(worst)});
  }
  {
    double worst = 0.0;
    bool unchanged = true;
    for (int s = 0; s < 1000; ++s) {
      Eigen::VectorXd u(3);
      Eigen::RowVectorXd a(3);
      for (int k = 0; k < 3; ++k) {
        u(k) = normal(rng);
        a(k) = normal(rng);
      }
      const double b = normal(rng);
      const auto d = solve_safety_qp(u, {{a, b}});
      const double excess = std::max(0.0, a.dot(u.transpose()) - b);
      const Eigen::VectorXd expect = u - excess / a.squaredNorm() * a.transpose();
      worst = std::max(worst, (d.u - expect).cwiseAbs().maxCoeff());
      if (excess == 0.0) { unchanged = unchanged && d.u == u; }
    }
    out.push_back({"single-row projection", worst <= 1e-10 && unchanged, "max error " + format_double(worst)});
  }
  {
    GainGraph g = GainGraph::uniform(4, 1.0, 0.2);
    const auto ok = check_small_gain(g);
    const auto bad = check_small_gain(GainGraph::uniform(4, 1.0, 0.5));
    const bool pass = std::abs(ok.spectral_radius - 0.6) <= 1e-9 && ok.pass && std::abs(bad.spectral_radius - 1.5) <= 1e-9 && !bad.pass;
    out.push_back({"small-gain certificate", pass, "radius " + format_double(ok.spectral_radius) + " / " + format_double(bad.spectral_radius)});
  }
  {
    const auto m = detail::scalar_model([](const HistoryView & v) { return -v.head()(0); });
    const double x = detail::integrate_scalar(m, HistoryBuffer::constant(0.01, Eigen::VectorXd::Ones(1)), 0.01, 1.0);
    const double err = std::abs(x - std::exp(-1.0));
    out.push_back({"rk4 linear decay", err < 1e-6, "error " + format_double(err)});
  }
  {
    const auto m = detail::scalar_model([](const HistoryView & v) { return -v.query(-1.0)(0); });
    const double x = detail::integrate_scalar(m, HistoryBuffer::constant(1.0, Eigen::VectorXd::Ones(1)), 1e-3, 2.0);
    // x = 1 - t on [0, 1], then x = -(t - 1) + (t - 1)^2 / 2 on [1, 2].
    const double err = std::abs(x + 0.5);
    out.push_back({"method of steps", err < 1e-4, "error " + format_double(err)});
  }
  {
    ScenarioConfig cfg = default_scenario();
    cfg.horizon = 1.0;
    cfg.dt = 1e-2;
    const Scenario sc = build_scenario(cfg);
    const Telemetry tel = simulate(sc, ControllerKind::qp);
    const auto rows = telemetry_rows(sc, tel);
    const std::string csv = write_csv(rows);
    const auto report = build_report(sc, ControllerKind::qp, tel, read_csv(csv));
    const double dev = recompute_deviation(report, csv, cfg);
    out.push_back({"report recomputed from csv", dev <= 1e-9 && tel.status == RunStatus::completed, "max deviation " + format_double(dev)});
  }
  return out;
}

}  // namespace delayguard
