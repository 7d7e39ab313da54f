#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "enhant/energy.hpp"
#include "enhant/model.hpp"

namespace enhant {

struct TraceRow {
  long slot = 0;
  std::vector<double> levels;  // end-of-slot, index 1..N (slot 0 unused)
  std::vector<int> rates;      // per source, the rate used during the slot
  std::vector<int> active;     // per source, the path used during the slot
};

struct FatalInfo {
  long slot = 0;
  int node = 0;
  std::string cause;
};

// Everything run_slot reports for one slot.
struct SlotOutcome {
  long slot = 0;
  std::vector<long> sent, delivered, dropped;  // per source
  std::vector<int> routing;                    // active path per source during the slot
  std::vector<int> rates;                      // rate per source during the slot
  std::vector<std::uint8_t> switched;          // switch decided this slot
  std::vector<int> shifts;                     // executed shift per source
  bool any_decision = false;
  std::vector<double> levels_end;
  std::optional<FatalInfo> fatal;
};

struct RunStats {
  int num_sources = 0;
  int num_intermediates = 0;
  long total_slots = 0;
  std::vector<long> sent, delivered, dropped, switches;
  std::map<std::vector<int>, long> routing_hist;
  std::vector<TraceRow> trace;
  // Per-slot per-source counters kept for the steady-state window.
  std::vector<std::vector<long>> slot_sent, slot_delivered, slot_dropped;
  std::optional<FatalInfo> fatal;
  // Flagged conditions: stale reports in use, and status sends that pushed a
  // node below the control reserve.
  long silent_status_events = 0;
  long status_below_reserve = 0;

  RunStats() = default;
  RunStats(int sources, int intermediates)
      : num_sources(sources),
        num_intermediates(intermediates),
        sent(static_cast<std::size_t>(sources), 0),
        delivered(static_cast<std::size_t>(sources), 0),
        dropped(static_cast<std::size_t>(sources), 0),
        switches(static_cast<std::size_t>(sources), 0) {}
};

inline void record_slot(RunStats& st, const SlotOutcome& out) {
  st.total_slots += 1;
  for (int s = 0; s < st.num_sources; ++s) {
    auto i = static_cast<std::size_t>(s);
    st.sent[i] += out.sent[i];
    st.delivered[i] += out.delivered[i];
    st.dropped[i] += out.dropped[i];
    if (out.switched[i]) st.switches[i] += 1;
  }
  st.routing_hist[out.routing] += 1;
  st.trace.push_back(TraceRow{out.slot, out.levels_end, out.rates, out.routing});
  st.slot_sent.push_back(out.sent);
  st.slot_delivered.push_back(out.delivered);
  st.slot_dropped.push_back(out.dropped);
  if (out.fatal) st.fatal = out.fatal;
}

// Aggregate view over a window of slots.
struct WindowReport {
  long slots = 0;
  std::vector<long> sent, delivered, dropped;
  std::map<std::string, double> routing_fractions;
  std::map<std::string, long> routing_counts;
  double throughput_per_slot = 0;
};

struct Report {
  WindowReport global;
  WindowReport steady_state;
  std::vector<long> switches;
  std::optional<FatalInfo> fatal;
};

inline std::string routing_key(const std::vector<int>& r) {
  std::string key;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i) key += ",";
    key += std::to_string(r[i]);
  }
  return key;
}

namespace detail {
inline WindowReport window_report(const RunStats& st, long first_slot_index) {
  WindowReport w;
  w.sent.assign(static_cast<std::size_t>(st.num_sources), 0);
  w.delivered.assign(static_cast<std::size_t>(st.num_sources), 0);
  w.dropped.assign(static_cast<std::size_t>(st.num_sources), 0);
  std::map<std::vector<int>, long> hist;
  for (long i = first_slot_index; i < st.total_slots; ++i) {
    auto k = static_cast<std::size_t>(i);
    for (int s = 0; s < st.num_sources; ++s) {
      auto j = static_cast<std::size_t>(s);
      w.sent[j] += st.slot_sent[k][j];
      w.delivered[j] += st.slot_delivered[k][j];
      w.dropped[j] += st.slot_dropped[k][j];
    }
    hist[st.trace[k].active] += 1;
    w.slots += 1;
  }
  long total_delivered = 0;
  for (long d : w.delivered) total_delivered += d;
  w.throughput_per_slot = w.slots > 0 ? static_cast<double>(total_delivered) / w.slots : 0.0;
  for (const auto& [state, count] : hist) {
    w.routing_counts[routing_key(state)] = count;
    w.routing_fractions[routing_key(state)] =
        w.slots > 0 ? static_cast<double>(count) / w.slots : 0.0;
  }
  return w;
}
}  // namespace detail

inline Report finalize(const RunStats& st, long num_ss_slots) {
  Report r;
  r.global = detail::window_report(st, 0);
  long first = st.total_slots - num_ss_slots;
  if (first < 0) first = 0;
  r.steady_state = detail::window_report(st, first);
  r.switches = st.switches;
  r.fatal = st.fatal;
  return r;
}

inline void print_report(std::ostream& os, const Report& r) {
  auto print_window = [&os](const WindowReport& w, const char* title) {
    os << title << " (" << w.slots << " slots)\n";
    for (std::size_t s = 0; s < w.sent.size(); ++s) {
      os << "  source " << (s + 1) << ": sent " << w.sent[s] << ", delivered " << w.delivered[s]
         << ", dropped " << w.dropped[s] << "\n";
    }
    os << "  routing states:";
    for (const auto& [key, frac] : w.routing_fractions) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", frac);
      os << "  [" << key << "] " << buf;
    }
    os << "\n  throughput/slot: " << w.throughput_per_slot << "\n";
  };
  print_window(r.global, "run totals");
  os << "  switches per source:";
  for (long c : r.switches) os << " " << c;
  os << "\n";
  print_window(r.steady_state, "steady state");
  if (r.fatal) {
    os << "FATAL at slot " << r.fatal->slot << ": node " << r.fatal->node << " (" << r.fatal->cause
       << ")\n";
  }
}

// Analytic no-drop rate for the diamond: two disjoint single-node paths,
// symmetric harvest. The amortized per-node drain (active half the time,
// one status report per slot, conservatively one command per slot) must not
// exceed the harvest rate.
inline long sustainable_rate_diamond(const Topology& t, const EnergyCostModel& costs, double e) {
  if (t.num_sources() != 1 || t.num_intermediates() != 2)
    throw std::invalid_argument("sustainable_rate_diamond: not a diamond topology");
  const auto& p1 = t.path(1, 1);
  const auto& p2 = t.path(1, 2);
  if (p1.size() != 1 || p2.size() != 1 || p1.front() == p2.front())
    throw std::invalid_argument("sustainable_rate_diamond: paths must be disjoint single nodes");
  if (costs.data_fwd <= 0) throw std::invalid_argument("sustainable_rate_diamond: zero data cost");
  double surplus = e - costs.status_tx - costs.control_rx;
  if (surplus <= 0) return 0;
  return static_cast<long>(std::floor(2.0 * surplus / costs.data_fwd));
}

}  // namespace enhant
