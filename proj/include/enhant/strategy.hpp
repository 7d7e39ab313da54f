#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "enhant/energy.hpp"
#include "enhant/model.hpp"

namespace enhant {

enum class StrategyKind { NoFeedback, FeedbackWithDangerZones, Estimate };

// Battery bands that force, block or invite rate shifts.
enum class Zone { HighDanger, LowDanger, BmaxZone, Normal };

enum class ShiftReason { None, HighDanger, LowDangerBlock, BmaxZone, BackShift, OmitDown };

struct ShiftDecision {
  int value = 0;  // -1, 0, +1
  ShiftReason reason = ShiftReason::None;
};

// How the controller measures the drift of a source over a cycle.
// TwoPathAverage follows the per-node average over both paths' critical
// nodes; ActivePathOnly tracks the active path's critical node alone.
enum class DriftMode { TwoPathAverage, ActivePathOnly };

// Switch iff the inactive path's minimum exceeds the active one's by more
// than the current threshold (strict). The switch takes effect at slot end.
inline bool decide_switch(double min_active, double min_inactive, double h_current) {
  return min_inactive - min_active > h_current;
}

// high_danger/low_danger are slot-equivalent counts: the danger bands span
// that many packet-forwarding costs above the control reserve.
inline Zone classify_zone(double level, const EnergyCostModel& costs, double b_max,
                          double high_danger, double low_danger) {
  if (level < costs.min_reserve + costs.data_fwd * high_danger) return Zone::HighDanger;
  if (level < costs.min_reserve + costs.data_fwd * low_danger) return Zone::LowDanger;
  if (level > 0.9 * b_max) return Zone::BmaxZone;
  return Zone::Normal;
}

// Cycle view assembled at a switch event: the window spans the last two
// switch intervals of the source, so I = I1 + I2 holds identically.
struct CycleTracker {
  long window_start_slot = 0;
  long slots_path1 = 0;  // I1
  long slots_path2 = 0;  // I2
  NodeId cn1, cn2;       // current critical node per path
  double cn1_start = 0;  // their levels when the window opened
  double cn2_start = 0;
  bool cn1_is_last = false;
  bool cn2_is_last = false;

  long window_length() const { return slots_path1 + slots_path2; }
};

// Average per-slot per-node energy change of the critical nodes over the
// window. levels is indexed by raw node id.
inline double compute_drift(const CycleTracker& cycle, std::span<const double> levels) {
  long window = cycle.window_length();
  double d1 = levels[static_cast<std::size_t>(cycle.cn1.raw)] - cycle.cn1_start;
  double d2 = levels[static_cast<std::size_t>(cycle.cn2.raw)] - cycle.cn2_start;
  return (d1 + d2) / (2.0 * static_cast<double>(window));
}

// Predicted per-cycle saving of a -1 rate shift: the forwarding cost over
// the whole window plus the overhearing each critical node would no longer
// pay. A path's critical node overhears only when it is not the last node
// of its path.
inline double estimate_delta(const EnergyCostModel& costs, long window, long slots_path1,
                             long slots_path2, bool cn1_is_last, bool cn2_is_last) {
  double overhear_slots = static_cast<double>(cn1_is_last ? 0 : slots_path1) +
                          static_cast<double>(cn2_is_last ? 0 : slots_path2);
  return costs.data_fwd * static_cast<double>(window) + overhear_slots * costs.header_rx;
}

// Drift-driven shift at a switch event. Estimate compares the window's total
// drift against a quarter of the predicted saving; the fixed-threshold
// strategy compares the per-slot drift against allowed_drift.
inline ShiftDecision back_shift(StrategyKind strategy, double drift, long window, double delta,
                                double allowed_drift) {
  int v = 0;
  if (strategy == StrategyKind::Estimate) {
    double total = static_cast<double>(window) * drift;
    if (total > delta / 4.0)
      v = 1;
    else if (total < -delta / 4.0)
      v = -1;
  } else if (strategy == StrategyKind::FeedbackWithDangerZones) {
    if (drift > allowed_drift)
      v = 1;
    else if (drift < -allowed_drift)
      v = -1;
  }
  return ShiftDecision{v, ShiftReason::BackShift};
}

// Switch-time shift: danger zones first, then the Bmax invitation, then the
// drift rule. A +1 from the latter two is cancelled while the active
// minimum sits in the low danger band.
inline ShiftDecision decide_at_switch(Zone active_min_zone, Zone inactive_min_zone,
                                      ShiftDecision back) {
  if (active_min_zone == Zone::HighDanger) return ShiftDecision{-1, ShiftReason::HighDanger};
  bool plus_blocked = active_min_zone == Zone::LowDanger;
  if (inactive_min_zone == Zone::BmaxZone) {
    if (plus_blocked) return ShiftDecision{0, ShiftReason::LowDangerBlock};
    return ShiftDecision{1, ShiftReason::BmaxZone};
  }
  if (back.value == 1 && plus_blocked) return ShiftDecision{0, ShiftReason::LowDangerBlock};
  return back;
}

// Non-switch shift: +1 only when the active path's minimum is in the Bmax
// band and no battery on the path fell this slot; otherwise a -1 when the
// bottleneck is an omit node already deep in danger.
inline ShiftDecision decide_nonswitch(bool min_in_bmax, bool all_non_decreasing,
                                      std::optional<Zone> omit_min_zone) {
  if (min_in_bmax && all_non_decreasing) return ShiftDecision{1, ShiftReason::BmaxZone};
  if (omit_min_zone && *omit_min_zone == Zone::HighDanger)
    return ShiftDecision{-1, ShiftReason::OmitDown};
  return ShiftDecision{0, ShiftReason::None};
}

// Reported levels at a switch event; the window open state for drift and
// delta evaluation two switches later.
struct SwitchEventRecord {
  long slot = 0;
  std::vector<double> reported;
  NodeId active_min;  // critical node at that event, for the debug stream
};

// Destination-side state for one source.
struct SourceController {
  int active = 1;  // current path, 1 or 2
  double h1 = 0;   // threshold to leave path 1
  double h2 = 0;   // threshold to leave path 2
  int pause_up = 0;
  int pause_down = 0;
  int pause_slot = 0;
  int max_pause_up = 0;
  int max_pause_down = 0;
  int max_pause_slot = 0;
  long switch_count = 0;
  bool switching_enabled = true;  // false when a path is fully omitted
  std::deque<SwitchEventRecord> history;  // at most the last two switch events

  double current_threshold() const { return active == 1 ? h1 : h2; }

  bool cycle_ready() const { return history.size() == 2; }

  void record_switch_event(SwitchEventRecord ev) {
    history.push_back(std::move(ev));
    if (history.size() > 2) history.pop_front();
  }

  // Pause ticks: the up/down pauses count this source's switches, the slot
  // pause counts slots.
  void tick_slot() {
    if (pause_slot > 0) --pause_slot;
  }
  void tick_switch() {
    if (pause_up > 0) --pause_up;
    if (pause_down > 0) --pause_down;
  }
};

struct GateResult {
  ShiftDecision decision;
  bool blocked = false;
};

// Pause gate: a pending shift is dropped (not deferred) while the matching
// pause is non-zero; an executed shift re-arms the pauses for its direction.
inline GateResult gate_by_pause(ShiftDecision d, SourceController& ctrl) {
  if (d.value == 1) {
    if (ctrl.pause_up > 0 || ctrl.pause_slot > 0) return {ShiftDecision{0, d.reason}, true};
    ctrl.pause_up = ctrl.max_pause_up;
    ctrl.pause_slot = ctrl.max_pause_slot;
    return {d, false};
  }
  if (d.value == -1) {
    if (ctrl.pause_down > 0 || ctrl.pause_slot > 0) return {ShiftDecision{0, d.reason}, true};
    ctrl.pause_down = ctrl.max_pause_down;
    ctrl.pause_slot = ctrl.max_pause_slot;
    return {d, false};
  }
  return {d, false};
}

}  // namespace enhant
