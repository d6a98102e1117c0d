#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "phyto/format.hpp"
#include "phyto/runtime.hpp"

namespace {

using namespace phyto;

void print_warnings(const runtime::ExperimentConfig& cfg) {
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
}

std::string command_line(const actuate::ActuatorCommand& c) {
  return std::to_string(c.cycle_id) + '\t' + iso8601_utc(c.timestamp_ms) + '\t' + c.binding_id + '\t' +
         c.actuator_id + '\t' + c.payload;
}

std::string vector_line(const detect::OutputVector& v) {
  std::string out = std::to_string(v.cycle_id) + '\t' + iso8601_utc(v.clock_ms);
  for (const auto& e : v.entries) {
    out += '\t' + e.id + '=';
    out += e.executed ? format_double(e.value) : std::string("0");
  }
  return out;
}

int cmd_run(const std::string& config_path, bool wall_clock, std::optional<std::uint64_t> seed, bool verbose) {
  auto cfg = runtime::load_experiment(config_path);
  print_warnings(cfg);
  if (wall_clock) cfg.wall_clock = true;
  if (seed) cfg.seed = *seed;
  auto summary = runtime::run_experiment(std::move(cfg), [&](const runtime::CycleTrace& t) {
    if (!verbose) return;
    for (const auto& c : t.commands) std::cout << command_line(c) << '\n';
  });
  std::cout << "cycles " << summary.cycles << '\n'
            << "records_logged " << summary.records_logged << '\n'
            << "commands " << summary.commands.size() << '\n';
  for (const auto& [binding, n] : summary.activations) std::cout << "activations " << binding << ' ' << n << '\n';
  std::cout << "actuator_errors " << summary.actuator_errors << '\n'
            << "mean_cycle_ms " << format_double(summary.mean_cycle_ms) << '\n'
            << "max_cycle_ms " << format_double(summary.max_cycle_ms) << '\n';
  for (const auto& e : summary.errors) std::cerr << "error: " << e << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_path) {
  const auto cfg = runtime::load_experiment(config_path);
  print_warnings(cfg);
  const auto result = runtime::run_sweep_command(cfg);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw store::StoreError("cannot write " + out_path);
  fra::write_sweep_csv(out, result.points);
  for (const auto& p : result.points) {
    for (const auto& w : p.warnings) std::cerr << "warning: " << format_double(p.frequency_hz) << " Hz: " << w << '\n';
  }
  if (result.error) {
    std::cerr << "error: " << *result.error << '\n';
    return 2;
  }
  std::cout << "points " << result.points.size() << '\n';
  return 0;
}

int cmd_replay(const std::string& log_path, const std::string& config_path, double speed) {
  const auto cfg = runtime::load_experiment(config_path);
  print_warnings(cfg);
  const auto log = store::read_log(log_path);
  runtime::replay_log(cfg, log, speed, [](const runtime::CycleDecision& d) {
    std::cout << vector_line(d.vector) << '\n';
    for (const auto& c : d.commands) std::cout << "command\t" << command_line(c) << '\n';
  });
  return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_path) {
  const auto cfg = runtime::load_experiment(scenario_path);
  print_warnings(cfg);
  const auto n = runtime::simulate_scenario(cfg, out_path);
  std::cout << "records " << n << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plant phytosensing and phytoactuation runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string log_path;
  bool wall_clock = false;
  bool verbose = false;
  std::optional<std::uint64_t> seed;
  double speed = INFINITY;

  auto* run = app.add_subcommand("run", "run an autonomous experiment");
  run->add_option("--config", config_path, "experiment file")->required()->check(CLI::ExistingFile);
  run->add_flag("--wall-clock", wall_clock, "pace cycles in real time");
  run->add_option("--seed", seed, "override the experiment seed");
  run->add_flag("-v,--verbose", verbose, "print every actuator command");

  auto* sweep = app.add_subcommand("sweep", "impedance spectroscopy sweep of the configured tissue");
  sweep->add_option("--config", config_path, "experiment file with a [sweep] section")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_path, "sweep CSV")->required();

  auto* replay = app.add_subcommand("replay", "feed a recorded log through detectors and bindings");
  replay->add_option("--log", log_path, "log directory or CSV file")->required()->check(CLI::ExistingPath);
  replay->add_option("--config", config_path, "experiment file")->required()->check(CLI::ExistingFile);
  replay->add_option("--speed", speed, "replay speed factor (default: as fast as possible)");

  auto* simulate = app.add_subcommand("simulate", "write the simulated channel stream of a scenario");
  simulate->add_option("--scenario", config_path, "scenario file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_path, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, wall_clock, seed, verbose);
    if (*sweep) return cmd_sweep(config_path, out_path);
    if (*replay) return cmd_replay(log_path, config_path, speed);
    if (*simulate) return cmd_simulate(config_path, out_path);
  } catch (const phyto::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
