#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "delayguard/delayguard.hpp"

namespace fs = std::filesystem;
using namespace delayguard;

namespace {

enum Exit { ok = 0, config_error = 2, unsafe = 3, numerical = 4 };

ScenarioConfig load(const std::string & path)
{
  ScenarioConfig cfg = path.empty() ? default_scenario() : load_config(path);
  if (const char * env = std::getenv("DELAYGUARD_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n < 1) { throw ConfigError(""); }
      cfg.threads = static_cast<unsigned>(n);
    } catch (const std::exception &) {
      throw ConfigError(std::string("DELAYGUARD_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return cfg;
}

void write_file(const fs::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) { throw std::runtime_error("cannot write " + path.string()); }
}

int run_one(const Scenario & sc, ControllerKind kind, const fs::path & dir)
{
  fs::create_directories(dir);
  const Telemetry tel = simulate(sc, kind);
  const auto rows = telemetry_rows(sc, tel);
  const std::string csv = write_csv(rows);
  std::optional<SurfaceAudit> audit;
  if (kind == ControllerKind::sliding) { audit = verify_surface_conditions(sc); }
  const auto report = build_report(sc, kind, tel, rows, audit);
  write_file(dir / "telemetry.csv", csv);
  write_file(dir / "report.json", report.dump(2) + "\n");
  write_file(dir / "trajectories.svg", write_svg(sc.cfg, rows));

  const auto & events = report["events"];
  std::printf(
    "%-8s %-16s min_h=%s max_final_distance=%s qp_infeasible=%zu -> %s\n", to_string(kind), to_string(tel.status),
    format_double(report["safety"]["min_h"].get<double>()).c_str(),
    format_double(report["stabilization"]["max_final_distance"].get<double>()).c_str(),
    events["qp_infeasible"].get<std::size_t>(), dir.string().c_str());
  if (tel.status != RunStatus::completed) { std::fprintf(stderr, "%s: %s\n", to_string(kind), tel.message.c_str()); }
  if (events["qp_infeasible"].get<std::size_t>() > 0) {
    std::fprintf(stderr, "%s: safety filter infeasible at %zu samples\n", to_string(kind), events["qp_infeasible"].get<std::size_t>());
  }

  if (tel.status == RunStatus::numerical_abort) { return numerical; }
  if (report["safety"]["violation"].get<bool>() || events["qp_infeasible"].get<std::size_t>() > 0) { return unsafe; }
  return ok;
}

int cmd_simulate(const std::string & path, const std::string & controller, const std::string & out)
{
  const Scenario sc = build_scenario(load(path));
  for (const auto & [i, k] : target_conflicts(sc.cfg)) {
    std::fprintf(stderr, "warning: target of robot %zu lies inside obstacle %zu\n", i + 1, k + 1);
  }
  std::vector<ControllerKind> kinds;
  if (controller == "qp" || controller == "both") { kinds.push_back(ControllerKind::qp); }
  if (controller == "sliding" || controller == "both") { kinds.push_back(ControllerKind::sliding); }
  int code = ok;
  for (auto kind : kinds) {
    const fs::path dir = kinds.size() > 1 ? fs::path(out) / to_string(kind) : fs::path(out);
    code = std::max(code, run_one(sc, kind, dir));
  }
  if (code == ok && !target_conflicts(sc.cfg).empty()) { code = unsafe; }
  return code;
}

int cmd_check_gains(const std::string & path)
{
  const Scenario sc = build_scenario(load(path));
  const auto cert = check_small_gain(sc.gains);
  const auto bcert = check_small_gain(sc.barrier_gains);
  std::printf("lyapunov gains: spectral radius %.6f %s\n", cert.spectral_radius, cert.pass ? "PASS" : "FAIL");
  std::printf("barrier gains:  spectral radius %.6f %s\n", bcert.spectral_radius, bcert.pass ? "PASS" : "FAIL");
  return cert.pass && bcert.pass ? ok : unsafe;
}

int cmd_verify_surface(const std::string & path)
{
  const Scenario sc = build_scenario(load(path));
  const SurfaceAudit audit = verify_surface_conditions(sc);
  for (const auto & e : audit.entries) {
    std::printf(
      "robot %zu: boundary min U^2=%s initial U^2=%s %s; surface roots=%zu/%zu min h=%s %s\n", e.robot + 1,
      format_double(e.boundary_min_u2).c_str(), format_double(e.initial_u2).c_str(), e.boundary_pass ? "PASS" : "FAIL", e.roots,
      e.rays, format_double(e.surface_min_h).c_str(), e.surface_pass ? "PASS" : "FAIL");
  }
  std::printf("surface audit %s\n", audit.pass() ? "PASS" : "FAIL");
  return audit.pass() ? ok : unsafe;
}

int cmd_selftest()
{
  bool all = true;
  for (const auto & c : run_selftest()) {
    std::printf("%-4s %s (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    all = all && c.pass;
  }
  return all ? ok : unsafe;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"delayguard: safe stabilization of delay-coupled systems"};
  app.require_subcommand(1);

  std::string sim_config;
  std::string controller = "both";
  std::string out = "out";
  auto * sim = app.add_subcommand("simulate", "run the scenario and write telemetry.csv, trajectories.svg, report.json");
  sim->add_option("config", sim_config, "JSON config (defaults if omitted)");
  sim->add_option("--controller", controller, "qp, sliding or both")->check(CLI::IsMember({"qp", "sliding", "both"}));
  sim->add_option("--out", out, "output directory");

  std::string gains_config;
  auto * gains = app.add_subcommand("check-gains", "print the small-gain certificates");
  gains->add_option("config", gains_config, "JSON config (defaults if omitted)");

  std::string surface_config;
  auto * surface = app.add_subcommand("verify-surface", "audit the sliding surface conditions");
  surface->add_option("config", surface_config, "JSON config (defaults if omitted)");

  auto * self = app.add_subcommand("selftest", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*sim) { return cmd_simulate(sim_config, controller, out); }
    if (*gains) { return cmd_check_gains(gains_config); }
    if (*surface) { return cmd_verify_surface(surface_config); }
    if (*self) { return cmd_selftest(); }
  } catch (const ConfigError & e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return config_error;
  } catch (const NumericalAbort & e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return numerical;
  } catch (const std::exception & e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return numerical;
  }
  return ok;
}
