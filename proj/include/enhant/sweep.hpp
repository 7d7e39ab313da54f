#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "enhant/config.hpp"
#include "enhant/output.hpp"
#include "enhant/schedule_io.hpp"

namespace enhant {

enum class SweepAxis { InitialRouting, ShiftPause, Threshold, AllowedDrift };

// One tested value: a number for most axes, a routing vector for the
// initial-routing axis.
struct SweepValue {
  double number = 0;
  std::vector<int> routing;

  std::string label() const {
    if (routing.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", number);
      return buf;
    }
    std::string s;
    for (std::size_t i = 0; i < routing.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(routing[i]);
    }
    return s;
  }
};

struct SweepSpec {
  std::string base_config_path;
  SweepAxis axis = SweepAxis::Threshold;
  std::vector<SweepValue> values;
  int repetitions = 2;
};

inline SweepSpec load_sweep(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open sweep spec: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("sweep parse error: ") + e.what());
  }
  cfg_detail::require_object(j, "sweep");
  cfg_detail::check_keys(j, {"base_config", "axis", "values", "repetitions"}, "sweep");

  SweepSpec spec;
  std::string base = cfg_detail::as_string(cfg_detail::get_required(j, "base_config", "sweep"),
                                           "sweep.base_config");
  std::filesystem::path bp(base);
  if (bp.is_relative()) bp = std::filesystem::path(path).parent_path() / bp;
  spec.base_config_path = bp.string();

  std::string axis = cfg_detail::as_string(cfg_detail::get_required(j, "axis", "sweep"),
                                           "sweep.axis");
  if (axis == "initial_routing")
    spec.axis = SweepAxis::InitialRouting;
  else if (axis == "shift_pause")
    spec.axis = SweepAxis::ShiftPause;
  else if (axis == "threshold")
    spec.axis = SweepAxis::Threshold;
  else if (axis == "allowed_drift")
    spec.axis = SweepAxis::AllowedDrift;
  else
    throw ConfigError("sweep.axis: unknown axis '" + axis + "'");

  if (j.contains("values")) {
    const nlohmann::json& jv = j["values"];
    if (!jv.is_array()) throw ConfigError("sweep.values: expected an array");
    for (std::size_t i = 0; i < jv.size(); ++i) {
      std::string vp = "sweep.values[" + std::to_string(i) + "]";
      SweepValue v;
      if (jv[i].is_array()) {
        if (spec.axis != SweepAxis::InitialRouting)
          throw ConfigError(vp + ": routing vectors only fit the initial_routing axis");
        for (std::size_t k = 0; k < jv[i].size(); ++k) {
          long r = cfg_detail::as_integer(jv[i][k], vp + "[" + std::to_string(k) + "]");
          if (r != 1 && r != 2) throw ConfigError(vp + ": routes must be 1 or 2");
          v.routing.push_back(static_cast<int>(r));
        }
      } else {
        v.number = cfg_detail::as_number(jv[i], vp);
      }
      spec.values.push_back(v);
    }
  }
  if (j.contains("repetitions")) {
    long r = cfg_detail::as_integer(j["repetitions"], "sweep.repetitions");
    if (r < 1) throw ConfigError("sweep.repetitions: must be at least 1");
    spec.repetitions = static_cast<int>(r);
  }
  if (spec.values.empty() && spec.axis != SweepAxis::InitialRouting)
    throw ConfigError("sweep.values: must not be empty");
  return spec;
}

// The initial-routing axis enumerates the cartesian product when no values
// were given.
inline void expand_initial_routing(SweepSpec& spec, int num_sources) {
  if (spec.axis != SweepAxis::InitialRouting || !spec.values.empty()) return;
  long combos = 1 << num_sources;
  for (long mask = 0; mask < combos; ++mask) {
    SweepValue v;
    for (int s = 0; s < num_sources; ++s) v.routing.push_back((mask >> (num_sources - 1 - s)) & 1 ? 2 : 1);
    spec.values.push_back(v);
  }
}

inline RunConfig apply_axis(RunConfig cfg, SweepAxis axis, const SweepValue& v) {
  switch (axis) {
    case SweepAxis::Threshold:
      for (SourceParams& s : cfg.sources) {
        s.h1 = v.number;
        s.h2 = v.number;
      }
      break;
    case SweepAxis::ShiftPause:
      cfg.max_shift_pause_up = static_cast<int>(v.number);
      cfg.max_shift_pause_down = static_cast<int>(v.number);
      cfg.max_shift_pause_slot = static_cast<int>(v.number);
      break;
    case SweepAxis::AllowedDrift:
      cfg.allowed_drift = v.number;
      break;
    case SweepAxis::InitialRouting:
      if (v.routing.size() != cfg.sources.size())
        throw ConfigError("initial_routing value length does not match the source count");
      for (std::size_t s = 0; s < cfg.sources.size(); ++s)
        cfg.sources[s].initial_route = v.routing[s];
      break;
  }
  return cfg;
}

// One report row: per-source columns averaged over the completed
// repetitions of one tested value.
struct SweepRow {
  std::string label;
  std::vector<double> switches, sent, delivered, dropped;
  std::map<std::string, double> routing_fractions;
  double total_delivered = 0;
  double total_dropped = 0;
  int completed = 0;
  int fatals = 0;
  std::vector<std::string> notes;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  int num_sources = 0;
};

inline void write_sweep_csv(const std::string& path, const SweepReport& rep,
                            const std::string& axis_name) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << axis_name;
  for (int s = 1; s <= rep.num_sources; ++s) os << ",switches_s" << s;
  for (int s = 1; s <= rep.num_sources; ++s) os << ",sent_s" << s;
  for (int s = 1; s <= rep.num_sources; ++s) os << ",sink_s" << s;
  for (int s = 1; s <= rep.num_sources; ++s) os << ",dropped_s" << s;
  os << ",total_throughput,routing_states,fatal_runs\n";
  for (const SweepRow& row : rep.rows) {
    os << "\"" << row.label << "\"";
    auto emit = [&os](const std::vector<double>& v) {
      char buf[32];
      for (double x : v) {
        std::snprintf(buf, sizeof buf, "%.6g", x);
        os << "," << buf;
      }
    };
    emit(row.switches);
    emit(row.sent);
    emit(row.delivered);
    emit(row.dropped);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", row.total_delivered);
    os << "," << buf << ",\"";
    bool first = true;
    for (const auto& [key, frac] : row.routing_fractions) {
      std::snprintf(buf, sizeof buf, "%.4f", frac);
      os << (first ? "" : "; ") << "[" << key << "] " << buf;
      first = false;
    }
    os << "\"," << row.fatals << "\n";
  }
}

inline void write_sweep_text(std::ostream& os, const SweepReport& rep,
                             const std::string& axis_name) {
  os << axis_name << " | routing states | switches/source | sent/source | at sink/source"
     << " | dropped/source | total\n";
  for (const SweepRow& row : rep.rows) {
    os << row.label << " | ";
    char buf[32];
    bool first = true;
    for (const auto& [key, frac] : row.routing_fractions) {
      std::snprintf(buf, sizeof buf, "%.2f", frac);
      os << (first ? "" : "; ") << buf;
      first = false;
    }
    auto emit = [&](const std::vector<double>& v) {
      os << " | ";
      for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6g", v[i]);
        os << (i ? " " : "") << buf;
      }
    };
    emit(row.switches);
    emit(row.sent);
    emit(row.delivered);
    emit(row.dropped);
    std::snprintf(buf, sizeof buf, "%.6g", row.total_delivered);
    os << " | " << buf;
    for (const std::string& n : row.notes) os << "  (" << n << ")";
    os << "\n";
  }
}

// Runs repetitions x values, each in its own output subdirectory, seeds
// derived as seed_base + repetition so whole sweeps replay exactly. Runs
// are independent and may execute on up to `jobs` threads.
inline SweepReport run_sweep(const RunConfig& base, SweepSpec spec, std::uint64_t seed_base,
                             int jobs, const std::string& out_dir) {
  expand_initial_routing(spec, base.topology.num_sources());
  std::filesystem::create_directories(out_dir);

  struct Task {
    std::size_t value_index;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t v = 0; v < spec.values.size(); ++v)
    for (int r = 0; r < spec.repetitions; ++r) tasks.push_back(Task{v, r});

  struct RunCell {
    bool done = false;
    bool fatal = false;
    std::string note;
    Report report;
    std::vector<long> switches;
  };
  std::vector<RunCell> cells(tasks.size());

  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      std::size_t mine;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= tasks.size()) return;
        mine = next++;
      }
      const Task& task = tasks[mine];
      const SweepValue& value = spec.values[task.value_index];
      RunCell& cell = cells[mine];
      try {
        RunConfig cfg = apply_axis(base, spec.axis, value);
        cfg.seed = seed_base + static_cast<std::uint64_t>(task.rep);

        std::string run_dir = out_dir + "/value_" + value.label() + "/rep_" +
                              std::to_string(task.rep);
        for (char& c : run_dir)
          if (c == ',') c = '-';
        std::filesystem::create_directories(run_dir);

        Engine engine(cfg);
        RunResult result = engine.run();
        Report report = finalize(result.stats, cfg.num_ss_slots);

        write_stats_json(run_dir + "/stats.json", result.stats, report, cfg);
        write_energy_trace(run_dir + "/energy_trace.csv", result.stats);
        write_rate_trace(run_dir + "/rate_trace.csv", result.stats);
        write_schedule_file(run_dir + "/packet_schedule.txt", result.schedules);
        write_manifest(run_dir + "/run_manifest.json", cfg);

        cell.done = true;
        cell.report = report;
        cell.switches = result.stats.switches;
        if (report.fatal) {
          cell.fatal = true;
          cell.note = "rep " + std::to_string(task.rep) + " fatal at slot " +
                      std::to_string(report.fatal->slot);
        }
      } catch (const std::exception& e) {
        cell.fatal = true;
        cell.note = "rep " + std::to_string(task.rep) + " failed: " + e.what();
      }
    }
  };

  int thread_count = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int i = 1; i < thread_count; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();

  SweepReport rep;
  rep.num_sources = base.topology.num_sources();
  for (std::size_t v = 0; v < spec.values.size(); ++v) {
    SweepRow row;
    row.label = spec.values[v].label();
    auto n = static_cast<std::size_t>(rep.num_sources);
    row.switches.assign(n, 0);
    row.sent.assign(n, 0);
    row.delivered.assign(n, 0);
    row.dropped.assign(n, 0);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].value_index != v) continue;
      const RunCell& cell = cells[i];
      if (cell.fatal) {
        row.fatals += 1;
        row.notes.push_back(cell.note);
        continue;
      }
      row.completed += 1;
      for (std::size_t s = 0; s < n; ++s) {
        row.switches[s] += static_cast<double>(cell.switches[s]);
        row.sent[s] += static_cast<double>(cell.report.global.sent[s]);
        row.delivered[s] += static_cast<double>(cell.report.global.delivered[s]);
        row.dropped[s] += static_cast<double>(cell.report.global.dropped[s]);
      }
      for (const auto& [key, frac] : cell.report.global.routing_fractions)
        row.routing_fractions[key] += frac;
    }
    if (row.completed > 0) {
      for (std::size_t s = 0; s < n; ++s) {
        row.switches[s] /= row.completed;
        row.sent[s] /= row.completed;
        row.delivered[s] /= row.completed;
        row.dropped[s] /= row.completed;
      }
      for (auto& [key, frac] : row.routing_fractions) frac /= row.completed;
    }
    for (std::size_t s = 0; s < n; ++s) {
      row.total_delivered += row.delivered[s];
      row.total_dropped += row.dropped[s];
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::InitialRouting: return "initial_routing";
    case SweepAxis::ShiftPause: return "shift_pause";
    case SweepAxis::Threshold: return "threshold";
    default: return "allowed_drift";
  }
}

}  // namespace enhant
