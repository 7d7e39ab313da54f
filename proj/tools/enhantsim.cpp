// Command-line front end: single runs, exact replays of a recorded packet
// schedule, and parameter sweeps with aggregate tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "enhant/config.hpp"
#include "enhant/engine.hpp"
#include "enhant/output.hpp"
#include "enhant/schedule_io.hpp"
#include "enhant/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFatal = 3;

struct DebugFiles {
  std::unique_ptr<std::ofstream> switch_times;
  std::unique_ptr<std::ofstream> strategy;
  std::unique_ptr<std::ofstream> nonswitch;
};

void print_parameters(const enhant::RunConfig& cfg) {
  std::cout << "sources: " << cfg.topology.num_sources()
            << ", intermediates: " << cfg.topology.num_intermediates()
            << ", slots: " << cfg.num_slots << ", strategy: "
            << enhant::cfg_detail::strategy_name(cfg.strategy) << ", seed: " << cfg.seed << "\n";
  enhant::EnergyCostModel costs = enhant::derive_costs(cfg.raw_energy);
  std::cout << "costs [mJ]: data_fwd " << costs.data_fwd << ", status_tx " << costs.status_tx
            << ", control_rx " << costs.control_rx << ", header_rx " << costs.header_rx
            << ", reserve " << costs.min_reserve << "\n";
}

int run_single(const enhant::RunConfig& cfg, const std::string& out_dir,
               const std::string& replay_path, const std::vector<std::string>& debug) {
  std::filesystem::create_directories(out_dir);
  enhant::Engine engine(cfg);

  if (!replay_path.empty()) {
    std::vector<enhant::SlotSchedule> schedules;
    try {
      schedules = enhant::read_schedule_file(replay_path);
      enhant::validate_schedule(schedules, cfg.topology.num_sources(), cfg.num_slots);
    } catch (const std::exception& e) {
      std::cerr << "replay: " << e.what() << "\n";
      return kExitConfig;
    }
    engine.set_replay(std::move(schedules));
  }

  DebugFiles files;
  for (const std::string& d : debug) {
    if (d == "switch-times") {
      files.switch_times = std::make_unique<std::ofstream>(out_dir + "/debug_switch_times.log");
    } else if (d == "strategy") {
      files.strategy = std::make_unique<std::ofstream>(out_dir + "/debug_strategy.log");
    } else if (d == "nonswitch-shift") {
      files.nonswitch = std::make_unique<std::ofstream>(out_dir + "/debug_nonswitch_shift.log");
    } else {
      std::cerr << "unknown debug stream: " << d << "\n";
      return kExitConfig;
    }
  }
  engine.set_debug_streams(files.switch_times.get(), files.strategy.get(),
                           files.nonswitch.get());

  print_parameters(cfg);
  enhant::RunResult result = engine.run();
  enhant::Report report = enhant::finalize(result.stats, cfg.num_ss_slots);

  enhant::write_stats_json(out_dir + "/stats.json", result.stats, report, cfg);
  enhant::write_energy_trace(out_dir + "/energy_trace.csv", result.stats);
  enhant::write_rate_trace(out_dir + "/rate_trace.csv", result.stats);
  enhant::write_schedule_file(out_dir + "/packet_schedule.txt", result.schedules);
  enhant::write_manifest(out_dir + "/run_manifest.json", cfg);

  enhant::print_report(std::cout, report);
  if (report.fatal) {
    std::cerr << "fatal at slot " << report.fatal->slot << ": node " << report.fatal->node
              << " cannot receive the control packet\n";
    return kExitFatal;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slot-synchronous simulator for energy-harvesting tag networks"};

  std::string config_path, out_dir = "out", replay_path, sweep_path, strategy_override;
  std::uint64_t seed = 0;
  bool seed_given = false;
  long slots_override = -1;
  int jobs = 1;
  std::vector<std::string> debug;

  app.add_option("--config", config_path, "run config (JSON) or run manifest");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "RNG seed (overrides the config)")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--replay", replay_path, "packet schedule record to replay");
  app.add_option("--sweep", sweep_path, "sweep spec (JSON); runs a parameter sweep");
  app.add_option("--jobs", jobs, "parallel runs for sweeps")->capture_default_str();
  app.add_option("--strategy", strategy_override,
                 "strategy override: no-feedback | fwdz | estimate");
  app.add_option("--slots", slots_override, "number of slots override");
  app.add_option("--debug", debug,
                 "debug streams: switch-times | strategy | nonswitch-shift")
      ->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    if (!sweep_path.empty()) {
      enhant::SweepSpec spec = enhant::load_sweep(sweep_path);
      enhant::LoadedConfig loaded = enhant::load_config(
          config_path.empty() ? spec.base_config_path : config_path);
      for (const std::string& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
      enhant::RunConfig cfg = loaded.config;
      if (!strategy_override.empty())
        cfg.strategy = enhant::cfg_detail::parse_strategy(strategy_override, "--strategy");
      if (slots_override >= 0) {
        cfg.num_slots = slots_override;
        cfg.num_ss_slots = std::min(cfg.num_ss_slots, cfg.num_slots);
      }
      std::uint64_t base_seed = seed_given ? seed : cfg.seed;
      enhant::SweepReport rep = enhant::run_sweep(cfg, spec, base_seed, jobs, out_dir);
      std::string axis = enhant::axis_name(spec.axis);
      enhant::write_sweep_csv(out_dir + "/sweep_report.csv", rep, axis);
      std::ofstream text(out_dir + "/sweep_report.txt");
      enhant::write_sweep_text(text, rep, axis);
      enhant::write_sweep_text(std::cout, rep, axis);
      return kExitOk;
    }

    if (config_path.empty()) {
      std::cerr << "--config is required (see --help)\n";
      return kExitConfig;
    }
    enhant::LoadedConfig loaded = enhant::load_config(config_path);
    for (const std::string& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    enhant::RunConfig cfg = loaded.config;
    if (seed_given) cfg.seed = seed;
    if (!strategy_override.empty())
      cfg.strategy = enhant::cfg_detail::parse_strategy(strategy_override, "--strategy");
    if (slots_override >= 0) {
      cfg.num_slots = slots_override;
      cfg.num_ss_slots = std::min(cfg.num_ss_slots, cfg.num_slots);
    }
    return run_single(cfg, out_dir, replay_path, debug);
  } catch (const enhant::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
