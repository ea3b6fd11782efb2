// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "delayguard/delayguard.hpp"

using namespace delayguard;

namespace {

struct Outcome
{
  bool pass{true};
  std::string detail;

  void require(bool ok, const std::string & what)
  {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string & what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Smooth random history: each robot wiggles around a random pose over [-delta, 0].
HistoryBuffer random_history(const Scenario & sc, std::mt19937_64 & rng, double min_clearance)
{
  std::uniform_real_distribution<double> coord(-2.5, 2.5);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> wiggle(-0.05, 0.05);
  const auto n = static_cast<Eigen::Index>(3 * sc.robot_count());
  for (;;) {
    Eigen::VectorXd base(n);
    Eigen::VectorXd amp(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      base(k) = k % 3 == 2 ? angle(rng) : coord(rng);
      amp(k) = wiggle(rng);
    }
    if (!(sc.min_h(base) > min_clearance)) { continue; }
    const double w = 2.0 * M_PI / sc.cfg.delta;
    return HistoryBuffer::sampled(
      sc.cfg.delta, sc.cfg.dt * 10.0, [&](double th) { return Eigen::VectorXd(base + amp * std::sin(w * th)); },
      sc.cfg.interpolation, [&](double th) { return Eigen::VectorXd(amp * (w * std::cos(w * th))); });
  }
}

Outcome scenario_reproduction()
{
  Outcome o;
  const Scenario sc = build_scenario(default_scenario());
  for (auto kind : {ControllerKind::qp, ControllerKind::sliding}) {
    const auto t0 = std::chrono::steady_clock::now();
    const Telemetry tel = simulate(sc, kind);
    const double elapsed = seconds_since(t0);
    const auto rep = telemetry_summary(telemetry_rows(sc, tel), sc.cfg.targets, sc.cfg.goal_radius);
    const double min_h = rep["safety"]["min_h"].get<double>();
    const double dist = rep["stabilization"]["max_final_distance"].get<double>();
    const std::string name = to_string(kind);
    o.require(tel.status == RunStatus::completed, name + " status " + to_string(tel.status) + ": " + tel.message);
    o.require(tel.steps == 40000, name + " stopped at step " + std::to_string(tel.steps));
    o.require(min_h > 0.0, name + " min h " + num(min_h));
    o.require(dist <= 0.05, name + " final distance " + num(dist));
    o.require(elapsed <= 60.0, name + " runtime " + num(elapsed) + " s");
    o.note(name + ": min h " + num(min_h) + ", final distance " + num(dist) + ", " + num(elapsed) + " s");
  }
  return o;
}

Outcome sontag_identity()
{
  Outcome o;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> logscale(-3.0, 3.0);
  double worst = 0.0;
  for (int s = 0; s < 100000; ++s) {
    const double a = n(rng) * std::pow(10.0, logscale(rng) / 3.0);
    Eigen::RowVectorXd b(3);
    for (int k = 0; k < 3; ++k) { b(k) = n(rng); }
    const double lhs = a + b.dot(sontag_control(a, b).transpose());
    const double rhs = -std::sqrt(a * a + b.squaredNorm() * b.squaredNorm());
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  o.require(worst <= 1e-10, "identity error " + num(worst));

  const Scenario sc = build_scenario(default_scenario());
  double worst_res = -std::numeric_limits<double>::infinity();
  double worst_gap = 0.0;
  for (int s = 0; s < 1000; ++s) {
    const HistoryBuffer phi = random_history(sc, rng, 0.0);
    const auto i = static_cast<std::size_t>(s % 4);
    const ControlDecision d = stabilizer(phi, sc.model, sc.mclfs, sc.gains, i);
    worst_res = std::max(worst_res, d.stabilizer_residual);
    const double expect = -std::sqrt(d.a * d.a + std::pow(d.b_norm, 4));
    worst_gap = std::max(worst_gap, std::abs(d.stabilizer_residual - expect) / std::max(1.0, std::abs(d.a)));
  }
  o.require(worst_res <= 1e-6, "stabilizer residual " + num(worst_res));
  o.require(worst_gap <= 1e-9, "stabilizer residual off the identity by " + num(worst_gap));
  o.note("identity error " + num(worst) + ", max residual " + num(worst_res));
  return o;
}

bool feasible(const Eigen::VectorXd & u, const std::vector<FilterRow> & rows)
{
  for (const auto & r : rows) {
    if (r.A.dot(u.transpose()) > r.b) { return false; }
  }
  return true;
}

/**
 * @brief Nested grid search for the closest feasible point, finishing at spacing `res`.
 *
 * With `relaxed` each row is loosened by |A_k|_1 * step / 2, so the grid point nearest to
 * any feasible point is admitted.
 */
Eigen::VectorXd grid_minimizer(const Eigen::VectorXd & u_nom, const std::vector<FilterRow> & rows, double res, bool relaxed = false)
{
  const auto m = static_cast<int>(u_nom.size());
  const auto r = rows.size();
  std::vector<double> a(r * 3, 0.0);
  std::vector<double> b(r);
  for (std::size_t k = 0; k < r; ++k) {
    for (int c = 0; c < m; ++c) { a[3 * k + static_cast<std::size_t>(c)] = rows[k].A(c); }
    b[k] = rows[k].b;
  }
  const double z[3] = {u_nom(0), u_nom(1), m == 3 ? u_nom(2) : 0.0};
  double centre[3] = {0.0, 0.0, 0.0};
  double best[3] = {0.0, 0.0, 0.0};
  double best_d = std::numeric_limits<double>::infinity();
  double half = 5.0;
  for (double step : {0.1, 0.01, res}) {
    const int n = static_cast<int>(std::lround(half / step));
    const int nz = m == 3 ? n : 0;
    std::vector<double> bl(b);
    for (std::size_t k = 0; k < r && relaxed; ++k) { bl[k] += 0.5 * step * rows[k].A.cwiseAbs().sum(); }
    for (int i = -n; i <= n; ++i) {
      for (int j = -n; j <= n; ++j) {
        for (int l = -nz; l <= nz; ++l) {
          const double u[3] = {centre[0] + step * i, centre[1] + step * j, centre[2] + step * l};
          const double d = (u[0] - z[0]) * (u[0] - z[0]) + (u[1] - z[1]) * (u[1] - z[1]) + (u[2] - z[2]) * (u[2] - z[2]);
          if (d >= best_d) { continue; }
          bool ok = true;
          for (std::size_t k = 0; k < r && ok; ++k) { ok = a[3 * k] * u[0] + a[3 * k + 1] * u[1] + a[3 * k + 2] * u[2] <= bl[k]; }
          if (ok) {
            best_d = d;
            std::copy(u, u + 3, best);
          }
        }
      }
    }
    std::copy(best, best + 3, centre);
    half = 15.0 * step;
  }
  Eigen::VectorXd out(m);
  for (int c = 0; c < m; ++c) { out(c) = best[c]; }
  return out;
}

Outcome qp_oracle()
{
  Outcome o;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 5);
  const double res = 1e-3;
  double worst_grid = -std::numeric_limits<double>::infinity();
  double worst_gap = 0.0;
  double worst_low = -std::numeric_limits<double>::infinity();
  double worst_row = 0.0;
  double worst_proj = 0.0;
  std::size_t unchanged_checked = 0;
  bool unchanged_ok = true;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index m = t % 2 == 0 ? 2 : 3;
    Eigen::VectorXd u_nom(m);
    for (auto & v : u_nom) { v = 1.5 * n(rng); }
    std::vector<FilterRow> rows;
    const int r = count(rng);
    for (int k = 0; k < r; ++k) {
      FilterRow row{Eigen::RowVectorXd(m), 0.0};
      for (auto & v : row.A) { v = n(rng); }
      // The origin stays strictly feasible, so every instance has a solution.
      row.b = 0.2 + std::abs(n(rng));
      rows.push_back(row);
    }
    const auto d = solve_safety_qp(u_nom, rows);
    if (d.infeasible) {
      o.require(false, "instance " + std::to_string(t) + " reported infeasible");
      continue;
    }
    if (feasible(u_nom, rows)) {
      ++unchanged_checked;
      unchanged_ok = unchanged_ok && d.u == u_nom;
    }
    if (r == 1) {
      const double excess = std::max(0.0, rows[0].A.dot(u_nom.transpose()) - rows[0].b);
      const Eigen::VectorXd expect = u_nom - excess / rows[0].A.squaredNorm() * rows[0].A.transpose();
      worst_proj = std::max(worst_proj, (d.u - expect).cwiseAbs().maxCoeff());
    }
    const Eigen::VectorXd g = grid_minimizer(u_nom, rows, res);
    // Projection onto a convex set: |g - u|^2 <= |g - z|^2 - |u - z|^2 for every feasible g.
    worst_grid = std::max(worst_grid, (d.u - g).squaredNorm() - ((g - u_nom).squaredNorm() - (d.u - u_nom).squaredNorm()));
    // The exact minimizer is never worse than the grid and at most one cell diagonal better.
    worst_gap = std::max(worst_gap, (g - u_nom).norm() - (d.u - u_nom).norm());
    const Eigen::VectorXd lo = grid_minimizer(u_nom, rows, res, true);
    worst_low = std::max(worst_low, (lo - u_nom).norm() - (d.u - u_nom).norm());
    worst_row = std::max(worst_row, -(d.margins.empty() ? 0.0 : std::min_element(d.margins.begin(), d.margins.end(), [](auto & x, auto & y) { return x.slack < y.slack; })->slack));
    o.require(
      (d.u - u_nom).norm() <= (g - u_nom).norm() + 1e-12, "instance " + std::to_string(t) + " worse than the grid");
  }
  o.require(worst_grid <= 1e-12, "projection inequality violated by " + num(worst_grid));
  // Relaxed grid optimum can undercut the exact one by at most half a cell diagonal.
  o.require(worst_low <= 0.5 * std::sqrt(3.0) * res, "relaxed grid beats the solver by " + num(worst_low));
  o.require(worst_row <= 1e-9, "solution violates a row by " + num(worst_row));
  o.require(worst_proj <= 1e-10, "single-row projection error " + num(worst_proj));
  o.require(unchanged_ok && unchanged_checked > 0, "feasible nominal control was modified");
  o.note(
    "projection inequality slack " + num(worst_grid) + ", strict grid gap " + num(worst_gap) + ", relaxed grid gap " + num(worst_low) + ", projection error " + num(worst_proj) + ", " +
    std::to_string(unchanged_checked) + " feasible nominal");
  return o;
}

Outcome sliding_identities()
{
  Outcome o;
  const Scenario sc = build_scenario(default_scenario());
  std::mt19937_64 rng(17);
  double worst_skew = 0.0;
  double worst_f = 0.0;
  int checked = 0;
  int degenerate = 0;
  while (checked < 1000) {
    const HistoryBuffer phi = random_history(sc, rng, 0.05);
    const auto i = static_cast<std::size_t>(checked % 4);
    try {
      const SlidingTerms t = sliding_terms(phi, sc.model, sc.mclfs[i], sc.sliding_barriers[i], sc.sliding_specs[i], i);
      const double scale = std::max(1.0, std::abs(t.F));
      worst_skew = std::max(worst_skew, std::abs(t.H.dot(t.J1 * t.H.transpose())) / scale);
      worst_f = std::max(worst_f, std::abs(t.H.dot((t.J1 + t.J2) * t.H.transpose()) - t.F) / scale);
      ++checked;
    } catch (const DegenerateSurfaceError &) {
      ++degenerate;
    }
  }
  o.require(worst_skew <= 1e-9, "H J1 H' = " + num(worst_skew));
  o.require(worst_f <= 1e-9, "H (J1 + J2) H' - F = " + num(worst_f));

  const Telemetry tel = simulate(sc, ControllerKind::sliding);
  o.require(tel.status == RunStatus::completed, "sliding run " + std::string(to_string(tel.status)));
  const double band = sc.cfg.sliding.boundary_layer;
  double worst_rise = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < sc.robot_count(); ++i) {
    const double w0 = tel.samples.front().decisions.at(i).W;
    const double tol = 1e-6 * std::max(1.0, w0);
    for (std::size_t k = 0; k + 1 < tel.samples.size(); ++k) {
      const auto & a = tel.samples[k].decisions;
      const auto & b = tel.samples[k + 1].decisions;
      if (a.empty() || b.empty() || !(std::abs(a[i].U) > band)) { continue; }
      ++pairs;
      const double rise = (b[i].W - a[i].W) / tol;
      worst_rise = std::max(worst_rise, rise);
    }
  }
  o.require(worst_rise <= 1.0, "W rose by " + num(worst_rise) + " tolerances outside the band");
  o.note(
    "skew " + num(worst_skew) + ", F identity " + num(worst_f) + ", " + std::to_string(degenerate) + " degenerate skipped, " +
    std::to_string(pairs) + " step pairs outside |U| <= " + num(band));
  return o;
}

Outcome small_gain()
{
  Outcome o;
  const auto ok = check_small_gain(GainGraph::uniform(4, 1.0, 0.2));
  const auto bad = check_small_gain(GainGraph::uniform(4, 1.0, 0.5));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", ok.spectral_radius);
  o.require(std::string(buf) == "0.600000" && std::abs(ok.spectral_radius - 0.6) <= 1e-9, "radius " + std::string(buf));
  o.require(ok.pass, "default gains rejected");
  o.require(std::abs(bad.spectral_radius - 1.5) <= 1e-9, "radius " + num(bad.spectral_radius));
  o.require(!bad.pass, "gamma 0.5 accepted");
  o.note("radius " + std::string(buf) + " PASS, " + num(bad.spectral_radius) + " FAIL");
  return o;
}

Outcome integrator()
{
  Outcome o;
  {
    const auto m = detail::scalar_model([](const HistoryView & v) { return -v.head()(0); });
    const double x = detail::integrate_scalar(m, HistoryBuffer::constant(0.01, Eigen::VectorXd::Ones(1)), 0.01, 1.0);
    const double err = std::abs(x - std::exp(-1.0));
    o.require(err < 1e-6, "linear decay error " + num(err));
    o.note("linear " + num(err));
  }
  {
    const auto m = detail::scalar_model([](const HistoryView & v) { return -v.query(-1.0)(0); });
    HistoryBuffer phi = HistoryBuffer::constant(1.0, Eigen::VectorXd::Ones(1));
    const std::vector<Eigen::VectorXd> u{Eigen::VectorXd::Zero(1)};
    double worst = 0.0;
    for (int k = 1; k <= 2000; ++k) {
      phi = integrate_step(std::move(phi), m, u, 1e-3);
      const double t = k * 1e-3;
      const double s = t - 1.0;
      const double exact = t <= 1.0 ? 1.0 - t : -s + 0.5 * s * s;
      worst = std::max(worst, std::abs(phi.head()(0) - exact));
    }
    o.require(worst < 1e-4, "method of steps error " + num(worst));
    o.note("delayed " + num(worst));
  }
  {
    // Scenario drift from a smooth history, controls off; breakpoints at multiples of delta lie on every grid.
    const Scenario sc = build_scenario(default_scenario());
    std::mt19937_64 rng(19);
    const HistoryBuffer xi = random_history(sc, rng, 0.0);
    auto solve = [&](double dt) {
      HistoryBuffer phi = xi;
      const std::vector<Eigen::VectorXd> u(4, Eigen::VectorXd::Zero(3));
      for (long k = 0; k < std::lround(1.0 / dt); ++k) { phi = integrate_step(std::move(phi), sc.model, u, dt); }
      return Eigen::VectorXd(phi.head());
    };
    const Eigen::VectorXd a = solve(0.1);
    const Eigen::VectorXd b = solve(0.05);
    const Eigen::VectorXd c = solve(0.025);
    const double ratio = (a - b).norm() / (b - c).norm();
    o.require(ratio >= 2.0, "Richardson ratio " + num(ratio));
    o.note("Richardson ratio " + num(ratio) + " (" + num((a - b).norm()) + " / " + num((b - c).norm()) + ")");
  }
  return o;
}

Outcome continuity_audit()
{
  Outcome o;
  ScenarioConfig cfg = default_scenario();
  for (auto & t : cfg.targets) { t.setZero(); }
  cfg.obstacles.clear();
  const Scenario sc = build_scenario(cfg);
  std::mt19937_64 rng(23);
  std::vector<HistoryBuffer> states;
  for (int s = 0; s < 100; ++s) { states.push_back(random_history(sc, rng, -1.0)); }

  std::vector<double> bound;
  for (int e = 0; e <= 6; ++e) {
    const double s = std::pow(10.0, -e);
    double worst = 0.0;
    for (const auto & phi : states) {
      std::vector<double> offs;
      std::vector<Eigen::VectorXd> xs;
      std::vector<std::optional<Eigen::VectorXd>> ds;
      for (std::size_t k = 0; k < phi.size(); ++k) {
        offs.push_back(phi.offset(k));
        xs.push_back(s * phi.state(k));
        const auto d = phi.slope(k);
        ds.push_back(d ? std::optional<Eigen::VectorXd>(s * *d) : std::nullopt);
      }
      const HistoryBuffer scaled(phi.delta(), offs, xs, phi.interpolation(), ds);
      for (std::size_t i = 0; i < sc.robot_count(); ++i) {
        worst = std::max(worst, stabilizer(scaled, sc.model, sc.mclfs, sc.gains, i).u.norm());
      }
    }
    bound.push_back(worst);
  }
  std::string trace;
  for (std::size_t e = 0; e < bound.size(); ++e) {
    trace += (e ? " " : "") + num(bound[e]);
    if (e == 0) { continue; }
    o.require(bound[e] < bound[e - 1], "not decreasing at decade " + std::to_string(e));
    o.require(bound[e] <= 3.0 * bound[e - 1], "decade " + std::to_string(e) + " exceeds 3x the previous bound");
  }
  o.require(bound.back() <= 1e-3 * bound.front(), "no decay towards zero");
  const auto zero = HistoryBuffer::constant(cfg.delta, Eigen::VectorXd::Zero(12));
  for (std::size_t i = 0; i < sc.robot_count(); ++i) {
    o.require(stabilizer(zero, sc.model, sc.mclfs, sc.gains, i).u.isZero(0.0), "u(0) != 0");
  }
  o.note("max |u| per decade: " + trace);
  return o;
}

Outcome forward_invariance()
{
  Outcome o;
  const unsigned workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<std::string> results(50);
  std::vector<double> min_hs(50, 0.0);
  std::vector<std::size_t> infeasible(50, 0);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int seed = next++; seed < 50; seed = next++) {
      const Scenario sc = build_scenario(random_layout(static_cast<std::uint64_t>(seed)));
      const Telemetry tel = simulate(sc, ControllerKind::qp);
      double mh = std::numeric_limits<double>::infinity();
      for (const auto & s : tel.samples) { mh = std::min(mh, sc.min_h(s.x)); }
      min_hs[static_cast<std::size_t>(seed)] = mh;
      infeasible[static_cast<std::size_t>(seed)] = count_events(tel).qp_infeasible;
      if (tel.status != RunStatus::completed || !(mh > 0.0)) {
        results[static_cast<std::size_t>(seed)] = "seed " + std::to_string(seed) + " " + to_string(tel.status) + ": " + tel.message;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) { pool.emplace_back(work); }
  for (auto & t : pool) { t.join(); }
  for (const auto & r : results) {
    if (!r.empty()) { o.require(false, r); }
  }
  o.note("smallest min h over seeds " + num(*std::min_element(min_hs.begin(), min_hs.end())));
  std::string relaxed;
  for (std::size_t seed = 0; seed < infeasible.size(); ++seed) {
    if (infeasible[seed] > 0) { relaxed += " " + std::to_string(seed) + ":" + std::to_string(infeasible[seed]); }
  }
  if (!relaxed.empty()) { o.note("seeds with least-violation filter steps (seed:steps)" + relaxed); }
  return o;
}

}  // namespace

int main(int argc, char ** argv)
{
  // Optional arguments select criteria by number.
  std::vector<int> only;
  for (int k = 1; k < argc; ++k) { only.push_back(std::atoi(argv[k])); }
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria{
    {"scenario reproduction", scenario_reproduction},
    {"sontag dissipation identity", sontag_identity},
    {"qp oracle equivalence", qp_oracle},
    {"sliding algebraic identities", sliding_identities},
    {"small-gain checker", small_gain},
    {"integrator correctness", integrator},
    {"continuity at origin", continuity_audit},
    {"forward invariance stress", forward_invariance},
  };
  int failed = 0;
  int index = 0;
  for (const auto & [name, fn] : criteria) {
    ++index;
    if (!only.empty() && std::find(only.begin(), only.end(), index) == only.end()) { continue; }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception & e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", index, name, seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
