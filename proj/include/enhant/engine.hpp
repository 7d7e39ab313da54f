#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "enhant/energy.hpp"
#include "enhant/model.hpp"
#include "enhant/rng.hpp"
#include "enhant/stats.hpp"
#include "enhant/strategy.hpp"

namespace enhant {

// One packet of a slot's schedule. time is the in-slot transmission instant;
// seq breaks ties so the processing order is total.
struct PacketEvent {
  int source = 0;  // 0-based source index
  double time = 0;
  long seq = 0;
};

struct SlotSchedule {
  long slot = 0;
  std::vector<PacketEvent> events;
};

// The slot's packets: g_i events per source, times uniform in [0,1), sorted
// by (time, seq). Packets never collide; each is forwarded on its own.
inline SlotSchedule generate_schedule(std::span<const int> rates, long slot, Rng& rng) {
  SlotSchedule sched;
  sched.slot = slot;
  long seq = 0;
  for (std::size_t s = 0; s < rates.size(); ++s)
    for (int k = 0; k < rates[s]; ++k)
      sched.events.push_back(PacketEvent{static_cast<int>(s), rng.next_unit(), seq++});
  std::sort(sched.events.begin(), sched.events.end(), [](const PacketEvent& a, const PacketEvent& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.seq < b.seq;
  });
  return sched;
}

struct SourceParams {
  int rate = 0;
  double h1 = 0;
  double h2 = 0;
  int initial_route = 1;
};

struct NodeParams {
  HarvestSource harvest;
  double initial = 0;
  double b_max = 0;
};

struct RunConfig {
  Topology topology;
  RawEnergyParams raw_energy;
  StrategyKind strategy = StrategyKind::Estimate;
  long num_slots = 10000;
  long num_ss_slots = 10000;
  double high_danger = 90;
  double low_danger = 200;
  int max_shift_pause_up = 5;
  int max_shift_pause_down = 2;
  int max_shift_pause_slot = 3;
  double allowed_drift = 0.003;
  DriftMode drift_mode = DriftMode::TwoPathAverage;
  std::vector<SourceParams> sources;
  std::vector<NodeParams> nodes;  // nodes[i-1] describes intermediate i
  std::uint64_t seed = 1;
};

// Every battery mutation, in execution order. A replayer folding these over
// the initial levels must land on the recorded traces bit-exactly.
enum class LedgerOp : std::uint8_t { SpendData, SpendOverhear, SpendStatus, SpendControl, Harvest };

struct LedgerEntry {
  long slot = 0;
  int node = 0;
  LedgerOp op = LedgerOp::Harvest;
  double amount = 0;
};

struct ForwardResult {
  bool delivered = false;
  int dropped_at = 0;  // raw node id
  int dropped_hop = 0;  // 1-based hop index
};

struct RunResult {
  RunStats stats;
  std::vector<SlotSchedule> schedules;
};

// One simulation instance. Strictly single-threaded and deterministic:
// identical config and seed give an identical outcome stream.
class Engine {
 public:
  explicit Engine(RunConfig cfg)
      : cfg_(std::move(cfg)),
        costs_(derive_costs(cfg_.raw_energy)),
        rng_(cfg_.seed),
        stats_(cfg_.topology.num_sources(), cfg_.topology.num_intermediates()) {
    const Topology& t = cfg_.topology;
    int n = t.num_intermediates();
    int s_count = t.num_sources();

    energies_.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) {
      const NodeParams& np = cfg_.nodes[static_cast<std::size_t>(i - 1)];
      energies_[static_cast<std::size_t>(i)] = NodeEnergy{np.initial, np.b_max, np.initial};
    }
    reported_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) reported_[static_cast<std::size_t>(i)] = energies_[static_cast<std::size_t>(i)].level;
    prev_reported_ = reported_;

    routing_.active.resize(static_cast<std::size_t>(s_count));
    rates_.resize(static_cast<std::size_t>(s_count));
    controllers_.resize(static_cast<std::size_t>(s_count));
    omit_.resize(static_cast<std::size_t>(s_count));
    for (int s = 1; s <= s_count; ++s) {
      auto i = static_cast<std::size_t>(s - 1);
      const SourceParams& sp = cfg_.sources[i];
      routing_.active[i] = sp.initial_route;
      rates_[i] = sp.rate;
      SourceController& c = controllers_[i];
      c.active = sp.initial_route;
      c.h1 = sp.h1;
      c.h2 = sp.h2;
      c.max_pause_up = cfg_.max_shift_pause_up;
      c.max_pause_down = cfg_.max_shift_pause_down;
      c.max_pause_slot = cfg_.max_shift_pause_slot;
      omit_[i] = omit_set(t, s);
      // A fully omitted path leaves no minimum to compare: switching is
      // disabled for the source.
      bool p1_empty = !min_on_path(reported_, t.path(s, 1), omit_[i]).has_value();
      bool p2_empty = !min_on_path(reported_, t.path(s, 2), omit_[i]).has_value();
      c.switching_enabled = !p1_empty && !p2_empty;
    }

    listening_ = listening_set(t, routing_);

    // Neighbor lists over intermediates.
    nbr_of_node_.resize(static_cast<std::size_t>(n) + 1);
    for (int u = 1; u <= n; ++u)
      for (int v = 1; v <= n; ++v)
        if (u != v && t.adjacent(t.intermediate(u), t.intermediate(v)))
          nbr_of_node_[static_cast<std::size_t>(u)].push_back(v);
    nbr_of_source_.resize(static_cast<std::size_t>(s_count));
    for (int s = 1; s <= s_count; ++s)
      for (int v = 1; v <= n; ++v)
        if (t.adjacent(t.source(s), t.intermediate(v)))
          nbr_of_source_[static_cast<std::size_t>(s - 1)].push_back(v);
  }

  void set_replay(std::vector<SlotSchedule> schedules) { replay_ = std::move(schedules); }
  void set_ledger(std::vector<LedgerEntry>* sink) { ledger_ = sink; }
  void set_debug_streams(std::ostream* switch_times, std::ostream* strategy,
                         std::ostream* nonswitch) {
    dbg_switch_times_ = switch_times;
    dbg_strategy_ = strategy;
    dbg_nonswitch_ = nonswitch;
  }

  const RunConfig& config() const { return cfg_; }
  const EnergyCostModel& costs() const { return costs_; }
  const RoutingState& routing() const { return routing_; }
  std::span<const int> rates() const { return rates_; }
  std::span<const NodeEnergy> energies() const { return energies_; }
  std::span<const double> reported_levels() const { return reported_; }
  const std::vector<SourceController>& controllers() const { return controllers_; }
  const RunStats& stats() const { return stats_; }

  // Applies the switch rule once per source on the initial levels, at zero
  // cost, so the first slot starts from a stable routing.
  void verify_initial_routing() {
    const Topology& t = cfg_.topology;
    for (int s = 1; s <= t.num_sources(); ++s) {
      auto i = static_cast<std::size_t>(s - 1);
      SourceController& c = controllers_[i];
      if (!c.switching_enabled) continue;
      auto mn_act = min_on_path(reported_, t.path(s, c.active), omit_[i]);
      auto mn_inact = min_on_path(reported_, t.path(s, other_path(c.active)), omit_[i]);
      if (mn_act && mn_inact &&
          decide_switch(mn_act->level, mn_inact->level, c.current_threshold())) {
        c.active = other_path(c.active);
        routing_.active[i] = c.active;
      }
    }
  }

  // Runs one slot and records it. See RunConfig for the knobs; the sequence
  // is: listening set, packet generation/replay, forwarding with
  // overhearing, status messages, control decisions, control cost, switch
  // and shift application, harvesting, bookkeeping.
  SlotOutcome run_slot() {
    const Topology& t = cfg_.topology;
    int n = t.num_intermediates();
    int s_count = t.num_sources();
    slot_ += 1;

    SlotOutcome out;
    out.slot = slot_;
    out.sent.assign(static_cast<std::size_t>(s_count), 0);
    out.delivered.assign(static_cast<std::size_t>(s_count), 0);
    out.dropped.assign(static_cast<std::size_t>(s_count), 0);
    out.routing = routing_.active;
    out.rates = rates_;
    out.switched.assign(static_cast<std::size_t>(s_count), 0);
    out.shifts.assign(static_cast<std::size_t>(s_count), 0);

    for (SourceController& c : controllers_) c.tick_slot();

    listening_ = listening_set(t, routing_);

    const SlotSchedule* sched;
    if (!replay_.empty()) {
      if (static_cast<std::size_t>(slot_) > replay_.size())
        throw std::runtime_error("replay schedule exhausted at slot " + std::to_string(slot_));
      sched = &replay_[static_cast<std::size_t>(slot_ - 1)];
    } else {
      generated_ = generate_schedule(rates_, slot_, rng_);
      sched = &generated_;
    }
    schedules_.push_back(*sched);

    for (const PacketEvent& ev : sched->events) {
      auto i = static_cast<std::size_t>(ev.source);
      out.sent[i] += 1;
      ForwardResult fr = forward_packet(ev);
      if (fr.delivered)
        out.delivered[i] += 1;
      else
        out.dropped[i] += 1;
    }

    end_of_slot_status();

    // Destination-side decisions, one source at a time, on reported levels.
    std::vector<ShiftDecision> exec(static_cast<std::size_t>(s_count));
    for (int s = 1; s <= s_count; ++s) {
      auto i = static_cast<std::size_t>(s - 1);
      SourceController& c = controllers_[i];
      auto mn_act = min_on_path(reported_, t.path(s, c.active), omit_[i]);
      auto mn_inact = min_on_path(reported_, t.path(s, other_path(c.active)), omit_[i]);

      bool switched = false;
      if (c.switching_enabled && mn_act && mn_inact)
        switched = decide_switch(mn_act->level, mn_inact->level, c.current_threshold());
      out.switched[i] = switched ? 1 : 0;

      ShiftDecision raw{0, ShiftReason::None};
      double drift = 0, delta = 0;
      bool have_cycle = false;
      if (cfg_.strategy != StrategyKind::NoFeedback) {
        if (switched) {
          Zone za = node_zone(*mn_act);
          Zone zi = node_zone(*mn_inact);
          ShiftDecision back{0, ShiftReason::None};
          if (c.cycle_ready()) {
            CycleTracker cyc = build_cycle(s, c);
            have_cycle = true;
            drift = drift_value(cyc, c);
            delta = estimate_delta(costs_, cyc.window_length(), cyc.slots_path1,
                                   cyc.slots_path2, cyc.cn1_is_last, cyc.cn2_is_last);
            back = back_shift(cfg_.strategy, drift, cyc.window_length(), delta,
                              cfg_.allowed_drift);
          }
          raw = decide_at_switch(za, zi, back);
          log_switch_shift(s, raw, *mn_act, drift, delta, have_cycle, c);
        } else {
          bool in_bmax = mn_act && node_zone(*mn_act) == Zone::BmaxZone;
          bool rising = true;
          for (NodeId u : t.path(s, c.active)) {
            auto k = static_cast<std::size_t>(u.raw);
            if (reported_[k] < prev_reported_[k]) {
              rising = false;
              break;
            }
          }
          std::optional<Zone> omit_zone;
          if (!omit_[i].empty()) {
            std::optional<PathMin> omin;
            for (int u : omit_[i]) {
              double lv = reported_[static_cast<std::size_t>(u)];
              if (!omin || lv < omin->level) omin = PathMin{NodeId{u}, lv};
            }
            omit_zone = node_zone(*omin);
          }
          raw = decide_nonswitch(in_bmax, rising, omit_zone);
        }
        // A down-shift at rate zero is a logged no-op, never a command.
        if (raw.value == -1 && rates_[i] == 0) {
          if (dbg_strategy_)
            (*dbg_strategy_) << "slot=" << slot_ << " source=" << s
                             << " -1 shift skipped at zero rate\n";
          raw.value = 0;
        }
      }

      if (switched) c.tick_switch();
      GateResult gated = gate_by_pause(raw, c);
      if (gated.blocked && dbg_strategy_)
        (*dbg_strategy_) << "slot=" << slot_ << " source=" << s << " shift "
                         << (raw.value > 0 ? "+1" : "-1") << " blocked by pause\n";
      exec[i] = gated.decision;
      out.shifts[i] = gated.decision.value;
      if (gated.decision.value != 0 && !switched && dbg_nonswitch_)
        (*dbg_nonswitch_) << "slot=" << slot_ << " source=" << s << " shift "
                          << (gated.decision.value > 0 ? "+1" : "-1") << " rate="
                          << std::max(0, rates_[i] + gated.decision.value) << "\n";
      if (gated.decision.value != 0 && switched && dbg_strategy_)
        (*dbg_strategy_) << "slot=" << slot_ << " source=" << s << " shift executed "
                         << (gated.decision.value > 0 ? "+1" : "-1") << " rate="
                         << std::max(0, rates_[i] + gated.decision.value) << "\n";
    }

    bool any_switch = false, any_shift = false;
    for (int s = 0; s < s_count; ++s) {
      auto i = static_cast<std::size_t>(s);
      if (out.switched[i]) any_switch = true;
      if (exec[i].value != 0) any_shift = true;
    }
    out.any_decision = any_switch || any_shift;

    if (out.any_decision) {
      if (auto fatal_node = apply_control()) {
        // The command could not be received; nothing was applied.
        out.fatal = FatalInfo{slot_, *fatal_node, "control packet receive"};
        std::fill(out.switched.begin(), out.switched.end(), 0);
        std::fill(out.shifts.begin(), out.shifts.end(), 0);
        out.levels_end = snapshot_levels();
        record_slot(stats_, out);
        return out;
      }
    }

    for (int s = 1; s <= s_count; ++s) {
      auto i = static_cast<std::size_t>(s - 1);
      SourceController& c = controllers_[i];
      if (out.switched[i]) {
        auto mn_act = min_on_path(reported_, t.path(s, c.active), omit_[i]);
        c.record_switch_event(SwitchEventRecord{slot_, reported_, mn_act->node});
        c.switch_count += 1;
        c.active = other_path(c.active);
        routing_.active[i] = c.active;
      }
      if (exec[i].value != 0) rates_[i] = std::max(0, rates_[i] + exec[i].value);
    }

    for (int u = 1; u <= n; ++u) {
      auto k = static_cast<std::size_t>(u);
      const HarvestSource& h = cfg_.nodes[k - 1].harvest;
      double amount = h.at(slot_);
      harvest_step(energies_[k], h, slot_);
      log_ledger(u, LedgerOp::Harvest, amount);
    }

    out.levels_end = snapshot_levels();
    prev_reported_ = reported_;
    record_slot(stats_, out);
    if (dbg_switch_times_ && (slot_ == 1 || any_switch)) log_switch_times();
    return out;
  }

  RunResult run() {
    verify_initial_routing();
    for (long i = 0; i < cfg_.num_slots; ++i) {
      SlotOutcome out = run_slot();
      if (out.fatal) break;
    }
    return RunResult{stats_, schedules_};
  }

  // Exposed for the unit suites.
  ForwardResult forward_packet(const PacketEvent& ev) {
    const Topology& t = cfg_.topology;
    int s = ev.source + 1;
    const auto& path = t.path(s, routing_.active[static_cast<std::size_t>(ev.source)]);
    int first = path.front().raw;

    // The source's transmission is overheard by every listening neighbor
    // except its intended next hop.
    for (int v : nbr_of_source_[static_cast<std::size_t>(ev.source)])
      if (v != first && listening_[static_cast<std::size_t>(v)]) overhear(v);

    for (std::size_t hop = 0; hop < path.size(); ++hop) {
      int u = path[hop].raw;
      auto k = static_cast<std::size_t>(u);
      if (try_spend(energies_[k], costs_.data_fwd, costs_.min_reserve) == SpendResult::Refused) {
        // Lost for good; upstream spends stay spent.
        return ForwardResult{false, u, static_cast<int>(hop) + 1};
      }
      log_ledger(u, LedgerOp::SpendData, costs_.data_fwd);
      int next = (hop + 1 < path.size()) ? path[hop + 1].raw : -1;
      for (int v : nbr_of_node_[k])
        if (v != next && listening_[static_cast<std::size_t>(v)]) overhear(v);
    }
    return ForwardResult{true, 0, 0};
  }

  // Status reports cost status_tx each; a node that cannot afford one stays
  // silent and its previous report remains in effect.
  std::vector<int> end_of_slot_status() {
    std::vector<int> silent;
    for (int u = 1; u <= cfg_.topology.num_intermediates(); ++u) {
      auto k = static_cast<std::size_t>(u);
      NodeEnergy& ne = energies_[k];
      if (ne.level >= costs_.status_tx) {
        ne.level -= costs_.status_tx;
        log_ledger(u, LedgerOp::SpendStatus, costs_.status_tx);
        reported_[k] = ne.level;
        if (ne.level < costs_.min_reserve) stats_.status_below_reserve += 1;
      } else {
        silent.push_back(u);
        stats_.silent_status_events += 1;
      }
    }
    return silent;
  }

  // Charges every node for the command packet; the run cannot continue if
  // any node misses it. Checked first so a fatal slot leaves levels intact.
  std::optional<int> apply_control() {
    int n = cfg_.topology.num_intermediates();
    for (int u = 1; u <= n; ++u)
      if (energies_[static_cast<std::size_t>(u)].level < costs_.control_rx) return u;
    for (int u = 1; u <= n; ++u) {
      energies_[static_cast<std::size_t>(u)].level -= costs_.control_rx;
      log_ledger(u, LedgerOp::SpendControl, costs_.control_rx);
    }
    return std::nullopt;
  }

 private:
  static int other_path(int which) { return which == 1 ? 2 : 1; }

  void overhear(int v) {
    auto k = static_cast<std::size_t>(v);
    if (try_spend(energies_[k], costs_.header_rx, costs_.min_reserve) == SpendResult::Spent)
      log_ledger(v, LedgerOp::SpendOverhear, costs_.header_rx);
  }

  Zone node_zone(const PathMin& m) const {
    double b_max = cfg_.nodes[static_cast<std::size_t>(m.node.raw - 1)].b_max;
    return classify_zone(m.level, costs_, b_max, cfg_.high_danger, cfg_.low_danger);
  }

  CycleTracker build_cycle(int s, const SourceController& c) const {
    const Topology& t = cfg_.topology;
    auto i = static_cast<std::size_t>(s - 1);
    const SwitchEventRecord& open = c.history[0];
    const SwitchEventRecord& mid = c.history[1];
    CycleTracker cyc;
    cyc.window_start_slot = open.slot;
    long current_interval = slot_ - mid.slot;
    long previous_interval = mid.slot - open.slot;
    if (c.active == 1) {
      cyc.slots_path1 = current_interval;
      cyc.slots_path2 = previous_interval;
    } else {
      cyc.slots_path1 = previous_interval;
      cyc.slots_path2 = current_interval;
    }
    auto mn1 = min_on_path(reported_, t.path(s, 1), omit_[i]);
    auto mn2 = min_on_path(reported_, t.path(s, 2), omit_[i]);
    cyc.cn1 = mn1->node;
    cyc.cn2 = mn2->node;
    cyc.cn1_start = open.reported[static_cast<std::size_t>(cyc.cn1.raw)];
    cyc.cn2_start = open.reported[static_cast<std::size_t>(cyc.cn2.raw)];
    cyc.cn1_is_last = cyc.cn1 == t.path(s, 1).back();
    cyc.cn2_is_last = cyc.cn2 == t.path(s, 2).back();
    return cyc;
  }

  double drift_value(const CycleTracker& cyc, const SourceController& c) const {
    if (cfg_.drift_mode == DriftMode::TwoPathAverage) return compute_drift(cyc, reported_);
    // Active-path variant: the active path's critical node alone.
    const NodeId cn = c.active == 1 ? cyc.cn1 : cyc.cn2;
    double start = c.active == 1 ? cyc.cn1_start : cyc.cn2_start;
    return (reported_[static_cast<std::size_t>(cn.raw)] - start) /
           static_cast<double>(cyc.window_length());
  }

  std::vector<double> snapshot_levels() const {
    std::vector<double> out(energies_.size(), 0);
    for (std::size_t k = 1; k < energies_.size(); ++k) out[k] = energies_[k].level;
    return out;
  }

  void log_ledger(int node, LedgerOp op, double amount) {
    if (ledger_) ledger_->push_back(LedgerEntry{slot_, node, op, amount});
  }

  int sources_using_node(NodeId node) const {
    int count = 0;
    for (int s = 1; s <= cfg_.topology.num_sources(); ++s) {
      const auto& p = cfg_.topology.path(s, routing_.active[static_cast<std::size_t>(s - 1)]);
      for (NodeId u : p)
        if (u == node) {
          ++count;
          break;
        }
    }
    return count;
  }

  void log_switch_shift(int s, const ShiftDecision& d, const PathMin& mn_act, double drift,
                        double delta, bool have_cycle, const SourceController& c) {
    if (!dbg_strategy_) return;
    const char* type = "none";
    switch (d.reason) {
      case ShiftReason::HighDanger: type = "bmin"; break;
      case ShiftReason::BmaxZone: type = "bmax"; break;
      case ShiftReason::BackShift: type = "back"; break;
      case ShiftReason::LowDangerBlock: type = "low-danger-block"; break;
      default: break;
    }
    if (d.value == 0 && d.reason != ShiftReason::LowDangerBlock) return;
    (*dbg_strategy_) << "slot=" << slot_ << " source=" << s << " type=" << type
                     << " dir=" << d.value << " min_level=" << mn_act.level;
    if (d.reason == ShiftReason::BackShift && have_cycle) {
      (*dbg_strategy_) << " drift=" << drift << " cur_min_users=" << sources_using_node(mn_act.node)
                       << " prev_min_users="
                       << (c.history.empty() ? 0 : sources_using_node(c.history.back().active_min));
      if (cfg_.strategy == StrategyKind::Estimate) (*dbg_strategy_) << " delta4=" << delta / 4.0;
    }
    if (d.reason == ShiftReason::LowDangerBlock)
      (*dbg_strategy_) << " note=+1-downgraded-by-low-danger";
    (*dbg_strategy_) << "\n";
  }

  void log_switch_times() {
    (*dbg_switch_times_) << "slot=" << slot_ << " routing=[";
    for (std::size_t i = 0; i < routing_.active.size(); ++i)
      (*dbg_switch_times_) << (i ? "," : "") << routing_.active[i];
    (*dbg_switch_times_) << "] rates=[";
    for (std::size_t i = 0; i < rates_.size(); ++i)
      (*dbg_switch_times_) << (i ? "," : "") << rates_[i];
    (*dbg_switch_times_) << "] harvest=[";
    for (std::size_t k = 1; k < energies_.size(); ++k)
      (*dbg_switch_times_) << (k > 1 ? "," : "") << cfg_.nodes[k - 1].harvest.at(slot_);
    (*dbg_switch_times_) << "] levels=[";
    for (std::size_t k = 1; k < energies_.size(); ++k)
      (*dbg_switch_times_) << (k > 1 ? "," : "") << energies_[k].level;
    (*dbg_switch_times_) << "]\n";
  }

  RunConfig cfg_;
  EnergyCostModel costs_;
  Rng rng_;
  RunStats stats_;

  long slot_ = 0;
  std::vector<NodeEnergy> energies_;  // index 1..N
  std::vector<double> reported_;      // last successfully reported levels
  std::vector<double> prev_reported_;
  RoutingState routing_;
  std::vector<int> rates_;
  std::vector<SourceController> controllers_;
  std::vector<std::set<int>> omit_;
  std::vector<std::uint8_t> listening_;
  std::vector<std::vector<int>> nbr_of_node_;
  std::vector<std::vector<int>> nbr_of_source_;

  std::vector<SlotSchedule> replay_;
  SlotSchedule generated_;
  std::vector<SlotSchedule> schedules_;
  std::vector<LedgerEntry>* ledger_ = nullptr;
  std::ostream* dbg_switch_times_ = nullptr;
  std::ostream* dbg_strategy_ = nullptr;
  std::ostream* dbg_nonswitch_ = nullptr;
};

}  // namespace enhant
