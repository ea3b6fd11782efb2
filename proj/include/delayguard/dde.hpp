#pragma once

/**
 * @file
 * @brief Fixed-step RK4 for retarded functional differential equations (method of steps).
 */

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "delayguard/controllers.hpp"
#include "delayguard/errors.hpp"
#include "delayguard/history.hpp"
#include "delayguard/system.hpp"

namespace delayguard {

/// Per-subsystem feedback evaluated on the full delay state.
using Controller = std::function<ControlDecision(const HistoryBuffer &, std::size_t)>;

struct SimConfig
{
  double dt{1e-3};
  double horizon{40.0};
  std::size_t stride{1};
  /// Worker cap for per-subsystem controller evaluation; 1 keeps everything on the caller's thread.
  unsigned threads{1};
  /// Called on every new state; a message means the state is unsafe and the run stops.
  std::function<std::optional<std::string>(const HistoryBuffer &)> monitor;

  void validate(double delta) const
  {
    if (!(dt > 0.0)) { throw ConfigError("dt must be positive"); }
    if (!(dt <= delta)) { throw ConfigError("dt must not exceed the delay"); }
    if (!(horizon > 0.0)) { throw ConfigError("horizon must be positive"); }
    if (stride == 0) { throw ConfigError("telemetry stride must be positive"); }
  }
};

enum class RunStatus { completed, safety_violation, numerical_abort };

inline const char * to_string(RunStatus s)
{
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::safety_violation: return "safety-violation";
    case RunStatus::numerical_abort: return "numerical-abort";
  }
  return "?";
}

struct TelemetrySample
{
  std::size_t step{0};
  double t{0.0};
  Eigen::VectorXd x;
  /// Controls applied on [t, t + dt); empty if the state could not be evaluated.
  std::vector<ControlDecision> decisions;
};

struct Telemetry
{
  std::vector<TelemetrySample> samples;
  RunStatus status{RunStatus::completed};
  std::string message;
  /// Last state reached (the offending one when the run stopped early).
  HistoryBuffer final_state;
  std::size_t steps{0};
};

/// Evaluate every subsystem's controller on one snapshot.
inline std::vector<ControlDecision> evaluate_controllers(
  const HistoryBuffer & phi, const std::vector<Controller> & controllers, unsigned threads = 1)
{
  const std::size_t p = controllers.size();
  std::vector<ControlDecision> out(p);
  if (threads <= 1 || p <= 1) {
    for (std::size_t i = 0; i < p; ++i) { out[i] = controllers[i](phi, i); }
    return out;
  }
  // Batches of at most `threads` tasks; results land in fixed slots so the order never changes.
  for (std::size_t first = 0; first < p; first += threads) {
    const std::size_t last = std::min(p, first + threads);
    std::vector<std::future<ControlDecision>> jobs;
    for (std::size_t i = first; i < last; ++i) {
      jobs.push_back(std::async(std::launch::async, [&, i] { return controllers[i](phi, i); }));
    }
    for (std::size_t i = first; i < last; ++i) { out[i] = jobs[i - first].get(); }
  }
  return out;
}

/**
 * @brief One RK4 step with the controls held constant.
 *
 * Stage states are exposed through HistoryView so delayed arguments inside (t, t + dt]
 * are interpolated between the head and the stage estimate. The first stage derivative
 * becomes the outgoing head slope; the derivative at the new head under the same
 * controls becomes its incoming slope.
 */
inline HistoryBuffer integrate_step(
  HistoryBuffer phi, const SystemModel & model, const std::vector<Eigen::VectorXd> & u, double dt)
{
  if (!(dt > 0.0) || dt > phi.delta()) { throw DomainError("step: need 0 < dt <= delta"); }
  const Eigen::VectorXd x = phi.head();
  const Eigen::VectorXd k1 = model.rhs(HistoryView(phi), u);
  HistoryBuffer base = std::move(phi).with_head_slope(k1);
  const Eigen::VectorXd x2 = x + 0.5 * dt * k1;
  const Eigen::VectorXd k2 = model.rhs(HistoryView(base, 0.5 * dt, x2), u);
  const Eigen::VectorXd x3 = x + 0.5 * dt * k2;
  const Eigen::VectorXd k3 = model.rhs(HistoryView(base, 0.5 * dt, x3), u);
  const Eigen::VectorXd x4 = x + dt * k3;
  const Eigen::VectorXd k4 = model.rhs(HistoryView(base, dt, x4), u);
  const Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  const Eigen::VectorXd k_end = model.rhs(HistoryView(base, dt, next), u);
  return std::move(base).advance(dt, next, k_end);
}

/// Controller evaluation followed by one integration step.
inline HistoryBuffer step(
  const HistoryBuffer & phi, const SystemModel & model, const std::vector<Controller> & controllers, double dt)
{
  std::vector<Eigen::VectorXd> u;
  for (auto & d : evaluate_controllers(phi, controllers)) { u.push_back(std::move(d.u)); }
  return integrate_step(phi, model, u, dt);
}

namespace detail {

inline std::string state_dump(double t, const Eigen::VectorXd & x)
{
  std::ostringstream os;
  os.precision(17);
  os << "t=" << t << " x=[";
  for (Eigen::Index k = 0; k < x.size(); ++k) { os << (k ? ", " : "") << x(k); }
  os << "]";
  return os.str();
}

}  // namespace detail

/**
 * @brief Integrate from the initial history up to the horizon.
 *
 * Telemetry sample k is taken at t = k * dt. The run stops early on a barrier-domain
 * error or monitor report (safety violation) and on non-finite states or controls
 * (numerical abort); the offending state is kept in `final_state` and dumped in `message`.
 */
inline Telemetry run(
  const SystemModel & model, const std::vector<Controller> & controllers, const HistoryBuffer & xi, const SimConfig & cfg)
{
  cfg.validate(xi.delta());
  if (controllers.size() != model.layout.count()) { throw ConfigError("run: one controller per subsystem required"); }
  if (xi.dim() != model.layout.total_dim()) { throw ConfigError("run: initial history has wrong dimension"); }

  const auto n_steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
  Telemetry tel;
  HistoryBuffer phi = xi;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const Eigen::VectorXd x = phi.head();
    auto stop = [&](RunStatus s, const std::string & why) {
      tel.status = s;
      tel.message = why + "; " + detail::state_dump(t, x);
      tel.samples.push_back({k, t, x, {}});
      tel.final_state = phi;
      tel.steps = k;
    };
    if (!x.allFinite()) {
      stop(RunStatus::numerical_abort, "non-finite state");
      return tel;
    }
    if (cfg.monitor) {
      if (auto why = cfg.monitor(phi)) {
        stop(RunStatus::safety_violation, *why);
        return tel;
      }
    }
    std::vector<ControlDecision> decisions;
    try {
      decisions = evaluate_controllers(phi, controllers, cfg.threads);
    } catch (const BarrierDomainError & e) {
      stop(RunStatus::safety_violation, e.what());
      return tel;
    }
    std::vector<Eigen::VectorXd> u;
    u.reserve(decisions.size());
    bool finite = true;
    for (const auto & d : decisions) {
      finite = finite && d.u.allFinite();
      u.push_back(d.u);
    }
    if (!finite) {
      stop(RunStatus::numerical_abort, "non-finite control");
      return tel;
    }
    if (k % cfg.stride == 0 || k == n_steps) { tel.samples.push_back({k, t, x, std::move(decisions)}); }
    if (k == n_steps) {
      tel.final_state = phi;
      tel.steps = k;
      return tel;
    }
    phi = integrate_step(std::move(phi), model, u, cfg.dt);
  }
}

}  // namespace delayguard
