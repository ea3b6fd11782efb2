#pragma once

/**
 * @file
 * @brief Four delay-coupled omnidirectional robots among circular obstacles.
 */

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "delayguard/controllers.hpp"
#include "delayguard/dde.hpp"
#include "delayguard/errors.hpp"
#include "delayguard/functionals.hpp"
#include "delayguard/history.hpp"
#include "delayguard/small_gain.hpp"
#include "delayguard/system.hpp"

namespace delayguard {

struct RobotParams
{
  double wheel_radius{0.02};
  double body_radius{0.2};
  double coupling{0.1};
  double softening{1e-2};

  void validate() const
  {
    if (!(wheel_radius > 0.0)) { throw ConfigError("wheel radius must be positive"); }
    if (!(body_radius > 0.0)) { throw ConfigError("body radius must be positive"); }
    if (!(coupling > 0.0)) { throw ConfigError("coupling gain must be positive"); }
    if (!(softening > 0.0)) { throw ConfigError("softening must be positive"); }
  }

  /// Wheel geometry for three wheels at 0, 120 and 240 degrees.
  Eigen::Matrix3d geometry() const
  {
    const double c = std::cos(M_PI / 6.0);
    const double s = std::sin(M_PI / 6.0);
    Eigen::Matrix3d j;
    j << 0.0, c, -c,
        -1.0, s, s,
        body_radius, body_radius, body_radius;
    return j;
  }
};

/// rot(heading) * J^-T * R: maps wheel angular velocities to (x', y', heading').
inline Eigen::Matrix3d robot_input_map(double heading, const RobotParams & params)
{
  params.validate();
  const Eigen::Matrix3d j = params.geometry();
  Eigen::FullPivLU<Eigen::Matrix3d> lu(j);
  if (!lu.isInvertible()) { throw ConfigError("wheel geometry matrix is singular"); }
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  Eigen::Matrix3d rot;
  rot << c, -s, 0.0,
         s, c, 0.0,
         0.0, 0.0, 1.0;
  return rot * lu.inverse().transpose() * params.wheel_radius;
}

/// Where the coupling reads each robot's past.
enum class DelayPlacement {
  mixed,    ///< own state at theta = 0, neighbours at theta = -delta
  current,  ///< everything at theta = 0
  delayed,  ///< everything at theta = -delta
};

/**
 * @brief f_il = sum_j k_i (x_il - x_jl) / (|p_i - p_j| + eps_i), l = 1, 2; heading drift 0.
 *
 * The history must stack one (x, y, heading) block per robot.
 */
inline Eigen::VectorXd robot_drift(
  const HistoryView & phi, const std::vector<RobotParams> & robots, DelayPlacement placement = DelayPlacement::mixed)
{
  const std::size_t p = robots.size();
  if (phi.dim() != 3 * p) { throw DomainError("robot_drift: history dimension must be 3 per robot"); }
  const double own_theta = placement == DelayPlacement::delayed ? -phi.delta() : 0.0;
  const double other_theta = placement == DelayPlacement::current ? 0.0 : -phi.delta();
  const Eigen::VectorXd own = phi.query(own_theta);
  const Eigen::VectorXd other = own_theta == other_theta ? own : phi.query(other_theta);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * p));
  for (std::size_t i = 0; i < p; ++i) {
    const auto oi = static_cast<Eigen::Index>(3 * i);
    const Eigen::Vector2d pi = own.segment<2>(oi);
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    for (std::size_t j = 0; j < p; ++j) {
      if (j == i) { continue; }
      const Eigen::Vector2d d = pi - other.segment<2>(static_cast<Eigen::Index>(3 * j));
      acc += d / (d.norm() + robots[i].softening);
    }
    f.segment<2>(oi) = robots[i].coupling * acc;
  }
  return f;
}

struct Obstacle
{
  Eigen::Vector2d center{Eigen::Vector2d::Zero()};
  double radius{0.3};
};

/// Controller stack selector.
enum class ControllerKind { qp, sliding, nominal };

inline const char * to_string(ControllerKind k)
{
  switch (k) {
    case ControllerKind::qp: return "qp";
    case ControllerKind::sliding: return "sliding";
    case ControllerKind::nominal: return "nominal";
  }
  return "?";
}

struct SlidingSettings
{
  double weight{0.5};
  double gain{5.0};
  /// Keep at least gain * delta.
  double boundary_layer{2.5};
  double g_tol{1e-9};
  /// Length scale of exp(-h/decay)/h; 0 selects the plain reciprocal 1/h.
  double barrier_decay{0.25};
  /// Shift U by the barrier terms at the target so the surface passes through it.
  bool target_level{true};
};

struct ScenarioConfig
{
  std::vector<Eigen::Vector2d> starts;
  std::vector<double> start_headings;
  std::vector<Eigen::Vector2d> targets;
  std::vector<Obstacle> obstacles;
  std::vector<RobotParams> robots;
  std::vector<double> sigma;
  Eigen::Matrix2d P{Eigen::Matrix2d::Identity()};
  Eigen::Matrix2d Q{Eigen::Matrix2d::Identity()};
  double rho_bar{1.0};
  double gamma_bar{0.2};
  double eta_bar{5.0};
  double chi_bar{0.2};
  double delta{0.5};
  DelayPlacement placement{DelayPlacement::mixed};
  Interpolation interpolation{Interpolation::cubic_hermite};
  double qp_margin{1e-6};
  bool aggregate_barriers{false};
  /// Pairwise robot clearance for extra filter rows; 0 disables them.
  double pairwise_clearance{0.0};
  SlidingSettings sliding;

  double dt{1e-3};
  double horizon{40.0};
  std::size_t stride{1};
  unsigned threads{1};
  /// Radius of the ball used for time-to-target.
  double goal_radius{0.05};

  std::size_t robot_count() const noexcept { return starts.size(); }

  void validate() const;
};

/// Four robots crossing a 4 m square diagonally through five obstacles.
inline ScenarioConfig default_scenario()
{
  ScenarioConfig c;
  c.starts = {{-2.0, -2.0}, {2.0, -2.0}, {2.0, 2.0}, {-2.0, 2.0}};
  c.targets = {{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0}, {2.0, -2.0}};
  c.start_headings = {0.0, 0.0, 0.0, 0.0};
  c.obstacles = {
    {{0.2, 0.0}, 0.3}, {{1.1, 0.9}, 0.3}, {{-0.9, -1.1}, 0.3}, {{-1.1, 0.9}, 0.3}, {{0.9, -1.1}, 0.3}};
  c.robots = std::vector<RobotParams>(4);
  c.sigma = {0.1, 0.1, 0.15, 0.05};
  return c;
}

inline void ScenarioConfig::validate() const
{
  const std::size_t p = starts.size();
  if (p == 0) { throw ConfigError("scenario needs at least one robot"); }
  if (targets.size() != p || robots.size() != p || sigma.size() != p || start_headings.size() != p) {
    throw ConfigError("starts, targets, headings, robots and sigma must have one entry per robot");
  }
  for (const auto & r : robots) { r.validate(); }
  for (double s : sigma) {
    if (!(s > 0.0)) { throw ConfigError("sigma must be positive"); }
  }
  for (const auto & o : obstacles) {
    if (!(o.radius > 0.0)) { throw ConfigError("obstacle radius must be positive"); }
  }
  if (!(delta > 0.0)) { throw ConfigError("delta must be positive"); }
  if (!(dt > 0.0) || dt > delta) { throw ConfigError("dt must lie in (0, delta]"); }
  if (!(horizon > 0.0)) { throw ConfigError("horizon must be positive"); }
  if (stride == 0) { throw ConfigError("stride must be positive"); }
  if (!(rho_bar > 0.0) || !(eta_bar > 0.0)) { throw ConfigError("rho_bar and eta_bar must be positive"); }
  if (!(gamma_bar >= 0.0) || !(chi_bar >= 0.0)) { throw ConfigError("gamma_bar and chi_bar must be nonnegative"); }
  if (!(qp_margin >= 0.0)) { throw ConfigError("qp margin must be nonnegative"); }
  if (!(pairwise_clearance >= 0.0)) { throw ConfigError("pairwise clearance must be nonnegative"); }
  if (!(goal_radius > 0.0)) { throw ConfigError("goal radius must be positive"); }
  if (!(sliding.barrier_decay >= 0.0)) { throw ConfigError("sliding barrier decay must be nonnegative"); }
  if (!(sliding.weight >= 0.0)) { throw ConfigError("sliding weight must be nonnegative"); }
  SlidingSurfaceSpec{{}, sliding.gain, sliding.boundary_layer, sliding.g_tol, 0.0}.validate();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < obstacles.size(); ++k) {
      if ((starts[i] - obstacles[k].center).norm() <= obstacles[k].radius) {
        throw ConfigError(
          "start of robot " + std::to_string(i + 1) + " is not strictly outside obstacle " + std::to_string(k + 1));
      }
    }
    if (pairwise_clearance > 0.0) {
      for (std::size_t j = i + 1; j < p; ++j) {
        if ((starts[i] - starts[j]).norm() <= pairwise_clearance) {
          throw ConfigError("starts of robots " + std::to_string(i + 1) + " and " + std::to_string(j + 1) + " violate the clearance");
        }
      }
    }
  }
}

/// Robot/obstacle pairs whose target is not strictly outside the obstacle.
inline std::vector<std::pair<std::size_t, std::size_t>> target_conflicts(const ScenarioConfig & c)
{
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < c.targets.size(); ++i) {
    for (std::size_t k = 0; k < c.obstacles.size(); ++k) {
      if ((c.targets[i] - c.obstacles[k].center).norm() <= c.obstacles[k].radius) { out.emplace_back(i, k); }
    }
  }
  return out;
}

/// Everything needed to simulate and audit one configuration.
struct Scenario
{
  ScenarioConfig cfg;
  SystemModel model;
  std::vector<FunctionalBundle> mclfs;
  GainGraph gains;
  GainGraph barrier_gains;
  /// h_ik for robot i and obstacle k, on the stacked state.
  std::vector<std::vector<SafeSetFunctional>> obstacle_h;
  std::vector<SafeSetFunctional> pairwise_h;
  /// Filter rows per robot.
  std::vector<std::vector<BarrierConstraint>> qp_barriers;
  /// Barriers and surface per robot for the sliding stack.
  std::vector<std::vector<FunctionalBundle>> sliding_barriers;
  std::vector<SlidingSurfaceSpec> sliding_specs;

  std::size_t robot_count() const noexcept { return cfg.robot_count(); }

  /// Constant history at the start poses.
  HistoryBuffer initial_history() const
  {
    Eigen::VectorXd x(static_cast<Eigen::Index>(3 * robot_count()));
    for (std::size_t i = 0; i < robot_count(); ++i) {
      x.segment<2>(static_cast<Eigen::Index>(3 * i)) = cfg.starts[i];
      x(static_cast<Eigen::Index>(3 * i + 2)) = cfg.start_headings[i];
    }
    return HistoryBuffer::constant(cfg.delta, x, cfg.interpolation);
  }

  /// Smallest safe-set value over obstacles (and pairs, if enabled) involving robot i.
  double min_h(const Eigen::VectorXd & x, std::size_t i) const
  {
    double best = std::numeric_limits<double>::infinity();
    for (const auto & h : obstacle_h.at(i)) { best = std::min(best, h.value(x)); }
    if (cfg.pairwise_clearance > 0.0) {
      std::size_t idx = 0;
      for (std::size_t a = 0; a < robot_count(); ++a) {
        for (std::size_t b = a + 1; b < robot_count(); ++b, ++idx) {
          if (a == i || b == i) { best = std::min(best, pairwise_h[idx].value(x)); }
        }
      }
    }
    return best;
  }

  double min_h(const Eigen::VectorXd & x) const
  {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < robot_count(); ++i) { best = std::min(best, min_h(x, i)); }
    return best;
  }

  /// V_i on the full history.
  double lyapunov(const HistoryBuffer & phi, std::size_t i) const
  {
    return mclfs.at(i).value(sub_view(phi, model.layout, i));
  }
};

namespace detail {

inline FunctionalBundle sliding_barrier(const SafeSetFunctional & h, double decay)
{
  BarrierShape shape;
  if (decay > 0.0) { shape.decay = decay; }
  return reciprocal_barrier(h, shape);
}

}  // namespace detail

inline Scenario build_scenario(const ScenarioConfig & cfg)
{
  cfg.validate();
  const std::size_t p = cfg.robot_count();
  Scenario sc;
  sc.cfg = cfg;
  sc.model.layout = SubsystemLayout(std::vector<std::size_t>(p, 3));
  sc.model.input_dims = std::vector<std::size_t>(p, 3);
  const auto robots = cfg.robots;
  const auto placement = cfg.placement;
  sc.model.drift = [robots, placement](const HistoryView & phi) { return robot_drift(phi, robots, placement); };
  sc.model.input_map = [robots](const HistoryView & phi, std::size_t i) {
    const Eigen::VectorXd x = phi.head();
    return Eigen::MatrixXd(robot_input_map(x(static_cast<Eigen::Index>(3 * i + 2)), robots.at(i)));
  };

  for (std::size_t i = 0; i < p; ++i) {
    sc.mclfs.push_back(quadratic_mclf(cfg.P, cfg.Q, cfg.sigma[i], cfg.targets[i]));
  }
  sc.gains = GainGraph::uniform(p, cfg.rho_bar, cfg.gamma_bar);
  sc.barrier_gains = GainGraph::uniform(p, cfg.eta_bar, cfg.chi_bar);

  sc.obstacle_h.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < cfg.obstacles.size(); ++k) {
      sc.obstacle_h[i].push_back(obstacle_h(
        PositionSlot{3 * i}, cfg.obstacles[k].center, cfg.obstacles[k].radius,
        "robot " + std::to_string(i + 1) + " / obstacle " + std::to_string(k + 1)));
    }
  }
  if (cfg.pairwise_clearance > 0.0) {
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a + 1; b < p; ++b) {
        sc.pairwise_h.push_back(pairwise_h(
          PositionSlot{3 * a}, PositionSlot{3 * b}, cfg.pairwise_clearance,
          "robots " + std::to_string(a + 1) + " / " + std::to_string(b + 1)));
      }
    }
  }

  sc.qp_barriers.resize(p);
  if (!cfg.obstacles.empty()) {
    if (cfg.aggregate_barriers) {
      std::vector<SafeSetFunctional> agg;
      for (std::size_t i = 0; i < p; ++i) {
        agg.push_back(harmonic_h(sc.obstacle_h[i], "robot " + std::to_string(i + 1) + " / all obstacles"));
      }
      for (std::size_t i = 0; i < p; ++i) {
        BarrierConstraint c{reciprocal_barrier(agg[i]), agg[i], cfg.eta_bar, {}};
        for (std::size_t j = 0; j < p; ++j) {
          if (j != i && cfg.chi_bar > 0.0) { c.coupling.emplace_back(cfg.chi_bar, agg[j]); }
        }
        sc.qp_barriers[i].push_back(std::move(c));
      }
    } else {
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < cfg.obstacles.size(); ++k) {
          BarrierConstraint c{reciprocal_barrier(sc.obstacle_h[i][k]), sc.obstacle_h[i][k], cfg.eta_bar, {}};
          for (std::size_t j = 0; j < p; ++j) {
            if (j != i && cfg.chi_bar > 0.0) { c.coupling.emplace_back(cfg.chi_bar, sc.obstacle_h[j][k]); }
          }
          sc.qp_barriers[i].push_back(std::move(c));
        }
      }
    }
  }
  if (cfg.pairwise_clearance > 0.0) {
    std::size_t idx = 0;
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a + 1; b < p; ++b, ++idx) {
        const auto & h = sc.pairwise_h[idx];
        sc.qp_barriers[a].push_back({reciprocal_barrier(h), h, cfg.eta_bar, {}});
        sc.qp_barriers[b].push_back({reciprocal_barrier(h), h, cfg.eta_bar, {}});
      }
    }
  }

  sc.sliding_barriers.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    SlidingSurfaceSpec spec;
    spec.gain = cfg.sliding.gain;
    spec.boundary_layer = cfg.sliding.boundary_layer;
    spec.g_tol = cfg.sliding.g_tol;
    Eigen::VectorXd at_target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * p));
    at_target.segment<2>(static_cast<Eigen::Index>(3 * i)) = cfg.targets[i];
    for (const auto & h : sc.obstacle_h[i]) {
      sc.sliding_barriers[i].push_back(detail::sliding_barrier(h, cfg.sliding.barrier_decay));
      spec.weights.push_back(cfg.sliding.weight);
      if (cfg.sliding.target_level && cfg.sliding.weight > 0.0 && h.value(at_target) > 0.0) {
        spec.level += cfg.sliding.weight * sc.sliding_barriers[i].back().eval_v1(at_target);
      }
    }
    spec.validate();
    sc.sliding_specs.push_back(std::move(spec));
  }
  return sc;
}

/// QP-filtered stabilizer for robot i.
inline ControlDecision qp_decision(const Scenario & sc, const HistoryBuffer & phi, std::size_t i)
{
  return safety_filter(phi, sc.model, sc.mclfs, sc.gains, sc.qp_barriers.at(i), i, sc.cfg.qp_margin);
}

/// Sliding-mode controller for robot i; a degenerate surface yields u = 0 and is flagged.
inline ControlDecision sliding_decision(const Scenario & sc, const HistoryBuffer & phi, std::size_t i)
{
  const Eigen::VectorXd f = sc.model.drift(phi);
  ControlDecision d;
  try {
    const SlidingTerms t = sliding_terms(phi, sc.model, sc.mclfs[i], sc.sliding_barriers[i], sc.sliding_specs[i], i, &f);
    d = sliding_control(t, sc.sliding_specs[i]);
  } catch (const DegenerateSurfaceError &) {
    d.u = Eigen::VectorXd::Zero(3);
    d.branch = Branch::sliding_degenerate;
  }
  d.V = sc.lyapunov(phi, i);
  return d;
}

inline std::vector<Controller> make_controllers(const Scenario & sc, ControllerKind kind)
{
  std::vector<Controller> out;
  for (std::size_t i = 0; i < sc.robot_count(); ++i) {
    switch (kind) {
      case ControllerKind::qp:
        out.emplace_back([&sc](const HistoryBuffer & phi, std::size_t j) { return qp_decision(sc, phi, j); });
        break;
      case ControllerKind::sliding:
        out.emplace_back([&sc](const HistoryBuffer & phi, std::size_t j) { return sliding_decision(sc, phi, j); });
        break;
      case ControllerKind::nominal:
        out.emplace_back([&sc](const HistoryBuffer & phi, std::size_t j) {
          return stabilizer(phi, sc.model, sc.mclfs, sc.gains, j);
        });
        break;
    }
  }
  return out;
}

inline SimConfig sim_config(const Scenario & sc)
{
  SimConfig cfg;
  cfg.dt = sc.cfg.dt;
  cfg.horizon = sc.cfg.horizon;
  cfg.stride = sc.cfg.stride;
  cfg.threads = sc.cfg.threads;
  cfg.monitor = [&sc](const HistoryBuffer & phi) -> std::optional<std::string> {
    const Eigen::VectorXd x = phi.head();
    for (std::size_t i = 0; i < sc.robot_count(); ++i) {
      const double h = sc.min_h(x, i);
      if (!(h > 0.0)) { return "robot " + std::to_string(i + 1) + " left the safe set (min h = " + std::to_string(h) + ")"; }
    }
    return std::nullopt;
  };
  return cfg;
}

/// Run one controller stack from the configured initial history. `sc` must outlive the call.
inline Telemetry simulate(const Scenario & sc, ControllerKind kind)
{
  return run(sc.model, make_controllers(sc, kind), sc.initial_history(), sim_config(sc));
}

/**
 * @brief Random layout in a square arena, seeded.
 *
 * Obstacles keep `gap` between each other; starts and targets keep `gap` from every
 * obstacle and from each other. Other settings are copied from `base`.
 */
inline ScenarioConfig random_layout(std::uint64_t seed, const ScenarioConfig & base = default_scenario(), double half_width = 2.5, double gap = 0.3)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-half_width, half_width);
  std::uniform_real_distribution<double> radius(0.2, 0.4);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  ScenarioConfig c = base;
  const std::size_t p = base.robot_count();
  const std::size_t m = base.obstacles.size();
  c.obstacles.clear();
  for (int tries = 0; c.obstacles.size() < m; ++tries) {
    if (tries > 100000) { throw ConfigError("random_layout: could not place obstacles"); }
    Obstacle o{{coord(rng), coord(rng)}, radius(rng)};
    bool ok = true;
    for (const auto & q : c.obstacles) { ok = ok && (o.center - q.center).norm() > o.radius + q.radius + gap; }
    if (ok) { c.obstacles.push_back(o); }
  }
  auto free_point = [&](const std::vector<Eigen::Vector2d> & taken) {
    for (int tries = 0; tries < 100000; ++tries) {
      const Eigen::Vector2d pt(coord(rng), coord(rng));
      bool ok = true;
      for (const auto & o : c.obstacles) { ok = ok && (pt - o.center).norm() > o.radius + gap; }
      for (const auto & q : taken) { ok = ok && (pt - q).norm() > gap; }
      if (ok) { return pt; }
    }
    throw ConfigError("random_layout: could not place robots");
  };
  c.starts.clear();
  c.targets.clear();
  c.start_headings.clear();
  for (std::size_t i = 0; i < p; ++i) {
    c.starts.push_back(free_point(c.starts));
    c.start_headings.push_back(angle(rng));
  }
  for (std::size_t i = 0; i < p; ++i) { c.targets.push_back(free_point(c.targets)); }
  return c;
}

/// Numerical audit of the surface hypotheses for one robot.
struct SurfaceAuditEntry
{
  std::size_t robot{0};
  /// Smallest U^2 on the sampled obstacle boundaries, against U^2 at the initial history.
  double boundary_min_u2{std::numeric_limits<double>::infinity()};
  double initial_u2{0.0};
  bool boundary_pass{false};
  std::size_t rays{0};
  std::size_t roots{0};
  std::size_t inconclusive{0};
  /// Smallest safe-set value at the located U = 0 points.
  double surface_min_h{std::numeric_limits<double>::infinity()};
  bool surface_pass{false};
};

struct SurfaceAudit
{
  std::vector<SurfaceAuditEntry> entries;
  bool pass() const
  {
    for (const auto & e : entries) {
      if (!e.boundary_pass || !e.surface_pass) { return false; }
    }
    return !entries.empty();
  }
};

struct SurfaceAuditOptions
{
  std::size_t boundary_samples{64};
  /// Relative offset outside each circle at which the boundary is probed.
  double boundary_offset{1e-6};
  std::size_t rays{64};
  double ray_length{10.0};
  std::size_t ray_steps{400};
  std::uint64_t seed{7};
};

/**
 * @brief Audit the sliding surface of each robot on constant histories at sampled positions.
 *
 * Boundary condition: U^2 on every obstacle circle is at least U^2 at the initial history.
 * Surface condition: U = 0 points found along rays from the minimizer of U lie strictly
 * inside the safe set. Rays without a sign change are counted as inconclusive.
 * `specs` overrides the scenario's surfaces (same length) when non-empty.
 */
inline SurfaceAudit verify_surface_conditions(
  const Scenario & sc, const std::vector<SlidingSurfaceSpec> & specs = {}, SurfaceAuditOptions opt = {})
{
  const std::size_t p = sc.robot_count();
  const auto & use = specs.empty() ? sc.sliding_specs : specs;
  if (use.size() != p) { throw ConfigError("surface audit: one surface per robot required"); }
  const double delta = sc.cfg.delta;
  const HistoryBuffer xi = sc.initial_history();
  const Eigen::VectorXd x_start = xi.head();

  SurfaceAudit audit;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < p; ++i) {
    const auto & spec = use[i];
    const auto oi = static_cast<Eigen::Index>(3 * i);
    auto u_at = [&](const Eigen::Vector2d & pos) -> std::optional<double> {
      Eigen::VectorXd x = x_start;
      x.segment<2>(oi) = pos;
      const HistoryBuffer phi = HistoryBuffer::constant(delta, x, sc.cfg.interpolation);
      double u = sc.mclfs[i].value(sub_view(phi, sc.model.layout, i)) - spec.level;
      try {
        for (std::size_t k = 0; k < sc.sliding_barriers[i].size(); ++k) {
          if (spec.weights.at(k) != 0.0) { u += spec.weights[k] * sc.sliding_barriers[i][k].value(phi); }
        }
      } catch (const BarrierDomainError &) {
        return std::nullopt;
      }
      return u;
    };

    SurfaceAuditEntry e;
    e.robot = i;
    {
      const double u0 = u_at(x_start.segment<2>(oi)).value_or(std::numeric_limits<double>::infinity());
      e.initial_u2 = u0 * u0;
    }
    for (const auto & o : sc.cfg.obstacles) {
      for (std::size_t s = 0; s < opt.boundary_samples; ++s) {
        const double a = 2.0 * M_PI * static_cast<double>(s) / static_cast<double>(opt.boundary_samples);
        const Eigen::Vector2d pos = o.center + o.radius * (1.0 + opt.boundary_offset) * Eigen::Vector2d(std::cos(a), std::sin(a));
        const double u = u_at(pos).value_or(std::numeric_limits<double>::infinity());
        e.boundary_min_u2 = std::min(e.boundary_min_u2, u * u);
      }
    }
    e.boundary_pass = e.boundary_min_u2 >= e.initial_u2;

    // Minimizer of U by coordinate-free pattern search from the target.
    Eigen::Vector2d centre = sc.cfg.targets[i];
    double best = u_at(centre).value_or(std::numeric_limits<double>::infinity());
    for (double step = 0.1; step > 1e-7; step *= 0.5) {
      bool moved = true;
      while (moved) {
        moved = false;
        for (int d = 0; d < 8; ++d) {
          const double a = M_PI * d / 4.0;
          const Eigen::Vector2d cand = centre + step * Eigen::Vector2d(std::cos(a), std::sin(a));
          const auto u = u_at(cand);
          if (u && *u < best) {
            best = *u;
            centre = cand;
            moved = true;
          }
        }
      }
    }

    const auto h_at = [&](const Eigen::Vector2d & pos) {
      Eigen::VectorXd x = x_start;
      x.segment<2>(oi) = pos;
      double h = std::numeric_limits<double>::infinity();
      for (const auto & hk : sc.obstacle_h[i]) { h = std::min(h, hk.value(x)); }
      return h;
    };

    if (!(best < 0.0)) {
      // U >= 0 everywhere sampled: the surface is at most the minimizer itself.
      e.rays = opt.rays;
      if (best == 0.0) {
        e.roots = 1;
        e.surface_min_h = h_at(centre);
      } else {
        e.inconclusive = opt.rays;
      }
    } else {
      for (std::size_t r = 0; r < opt.rays; ++r) {
        ++e.rays;
        const double a = angle(rng);
        const Eigen::Vector2d dir(std::cos(a), std::sin(a));
        const double ds = opt.ray_length / static_cast<double>(opt.ray_steps);
        double lo = 0.0;
        std::optional<double> hi;
        for (std::size_t s = 1; s <= opt.ray_steps; ++s) {
          const double t = ds * static_cast<double>(s);
          const auto u = u_at(centre + t * dir);
          if (!u || *u >= 0.0) {
            hi = t;
            break;
          }
          lo = t;
        }
        if (!hi) {
          ++e.inconclusive;
          continue;
        }
        double a_lo = lo;
        double a_hi = *hi;
        for (int it = 0; it < 100 && a_hi - a_lo > 1e-12; ++it) {
          const double mid = 0.5 * (a_lo + a_hi);
          const auto u = u_at(centre + mid * dir);
          if (!u || *u >= 0.0) {
            a_hi = mid;
          } else {
            a_lo = mid;
          }
        }
        const Eigen::Vector2d root = centre + a_hi * dir;
        const auto u_root = u_at(root);
        if (!u_root) {
          ++e.inconclusive;
          continue;
        }
        ++e.roots;
        e.surface_min_h = std::min(e.surface_min_h, h_at(root));
      }
    }
    e.surface_pass = e.roots > 0 && e.surface_min_h > 0.0;
    audit.entries.push_back(e);
  }
  return audit;
}

}  // namespace delayguard
