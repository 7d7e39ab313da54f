#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "enhant/config.hpp"
#include "enhant/stats.hpp"

namespace enhant {

inline nlohmann::json window_to_json(const WindowReport& w) {
  nlohmann::json j;
  j["slots"] = w.slots;
  nlohmann::json per_source = nlohmann::json::array();
  for (std::size_t s = 0; s < w.sent.size(); ++s) {
    nlohmann::json e;
    e["sent"] = w.sent[s];
    e["delivered"] = w.delivered[s];
    e["dropped"] = w.dropped[s];
    per_source.push_back(e);
  }
  j["per_source"] = per_source;
  j["routing_counts"] = w.routing_counts;
  j["routing_fractions"] = w.routing_fractions;
  j["throughput_per_slot"] = w.throughput_per_slot;
  return j;
}

inline nlohmann::json stats_to_json(const RunStats& st, const Report& report,
                                    const RunConfig& cfg) {
  nlohmann::json j = window_to_json(report.global);
  j["switches"] = report.switches;
  j["seed"] = cfg.seed;
  j["strategy"] = cfg_detail::strategy_name(cfg.strategy);
  j["steady_state"] = window_to_json(report.steady_state);
  if (report.fatal) {
    nlohmann::json f;
    f["slot"] = report.fatal->slot;
    f["node"] = report.fatal->node;
    f["cause"] = report.fatal->cause;
    j["fatal"] = f;
  } else {
    j["fatal"] = nullptr;
  }
  nlohmann::json flags;
  flags["silent_status_events"] = st.silent_status_events;
  flags["status_below_reserve"] = st.status_below_reserve;
  j["flags"] = flags;
  return j;
}

inline void write_stats_json(const std::string& path, const RunStats& st, const Report& report,
                             const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << stats_to_json(st, report, cfg).dump(2) << "\n";
}

inline void write_energy_trace(const std::string& path, const RunStats& st) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "slot";
  for (int i = 1; i <= st.num_intermediates; ++i) os << ",node_" << i;
  os << "\n";
  char buf[64];
  for (const TraceRow& row : st.trace) {
    os << row.slot;
    for (int i = 1; i <= st.num_intermediates; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row.levels[static_cast<std::size_t>(i)]);
      os << "," << buf;
    }
    os << "\n";
  }
}

inline void write_rate_trace(const std::string& path, const RunStats& st) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "slot";
  for (int s = 1; s <= st.num_sources; ++s) os << ",source_" << s;
  os << "\n";
  for (const TraceRow& row : st.trace) {
    os << row.slot;
    for (int rate : row.rates) os << "," << rate;
    os << "\n";
  }
}

}  // namespace enhant
