#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "enhant/engine.hpp"
#include "support/brute_force.hpp"

using namespace enhant;

namespace {

RawEnergyParams raw_for(double bit_energy_uj, double control_bits, double header_bits = 0,
                        double send_bit_energy_uj = -1) {
  RawEnergyParams raw;
  raw.send_bit_energy_uj = send_bit_energy_uj < 0 ? bit_energy_uj : send_bit_energy_uj;
  raw.receive_bit_energy_uj = bit_energy_uj;
  raw.data_packet_bits = 1000;
  raw.control_packet_bits = control_bits;
  raw.data_header_bits = header_bits;
  return raw;
}

// One source, two disjoint single-node paths.
RunConfig diamond_config(int rate, const RawEnergyParams& raw, double initial, double b_max,
                         double e, double h = 5) {
  RunConfig cfg;
  Topology t(1, 2);
  t.add_link(t.source(1), t.intermediate(1));
  t.add_link(t.source(1), t.intermediate(2));
  t.add_link(t.intermediate(1), t.destination());
  t.add_link(t.intermediate(2), t.destination());
  t.set_path(1, 1, {t.intermediate(1)});
  t.set_path(1, 2, {t.intermediate(2)});
  cfg.topology = t;
  cfg.raw_energy = raw;
  cfg.strategy = StrategyKind::NoFeedback;
  cfg.sources.push_back(SourceParams{rate, h, h, 1});
  for (int i = 0; i < 2; ++i) {
    NodeParams np;
    np.initial = initial;
    np.b_max = b_max;
    np.harvest.rate = e;
    cfg.nodes.push_back(np);
  }
  return cfg;
}

// One source, one two-hop path [1,3] plus an alternate node 2; 1 and 3 are
// adjacent so the first hop overhears the second.
RunConfig two_hop_config(int rate, const RawEnergyParams& raw, double initial, double b_max) {
  RunConfig cfg;
  Topology t(1, 3);
  t.add_link(t.source(1), t.intermediate(1));
  t.add_link(t.intermediate(1), t.intermediate(3));
  t.add_link(t.intermediate(3), t.destination());
  t.add_link(t.source(1), t.intermediate(2));
  t.add_link(t.intermediate(2), t.destination());
  t.set_path(1, 1, {t.intermediate(1), t.intermediate(3)});
  t.set_path(1, 2, {t.intermediate(2)});
  cfg.topology = t;
  cfg.raw_energy = raw;
  cfg.strategy = StrategyKind::NoFeedback;
  cfg.sources.push_back(SourceParams{rate, 1e9, 1e9, 1});  // never switch
  for (int i = 0; i < 3; ++i) {
    NodeParams np;
    np.initial = initial;
    np.b_max = b_max;
    np.harvest.rate = 0;
    cfg.nodes.push_back(np);
  }
  return cfg;
}

}  // namespace

TEST_CASE("generate_schedule: counts, attribution, ordering, determinism") {
  Rng rng(42);
  std::vector<int> zero = {0};
  CHECK(generate_schedule(zero, 1, rng).events.empty());

  std::vector<int> rates = {2, 3};
  Rng r1(7);
  SlotSchedule s = generate_schedule(rates, 1, r1);
  REQUIRE(s.events.size() == 5);
  int per_source[2] = {0, 0};
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    per_source[s.events[i].source] += 1;
    if (i > 0) {
      bool ordered = s.events[i - 1].time < s.events[i].time ||
                     (s.events[i - 1].time == s.events[i].time &&
                      s.events[i - 1].seq < s.events[i].seq);
      CHECK(ordered);
    }
    CHECK(s.events[i].time >= 0);
    CHECK(s.events[i].time < 1);
  }
  CHECK(per_source[0] == 2);
  CHECK(per_source[1] == 3);

  Rng r2(7);
  SlotSchedule again = generate_schedule(rates, 1, r2);
  REQUIRE(again.events.size() == s.events.size());
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    CHECK(again.events[i].source == s.events[i].source);
    CHECK(again.events[i].time == s.events[i].time);
    CHECK(again.events[i].seq == s.events[i].seq);
  }
}

TEST_CASE("forward_packet: diamond delivery, inactive node untouched") {
  // data_fwd = 1.0, reserve = 0.02
  RunConfig cfg = diamond_config(1, raw_for(0.5, 20), 10, 1000, 0);
  Engine eng(cfg);
  ForwardResult fr = eng.forward_packet(PacketEvent{0, 0.5, 0});
  CHECK(fr.delivered);
  CHECK(eng.energies()[1].level == 9.0);
  CHECK(eng.energies()[2].level == 10.0);
}

TEST_CASE("forward_packet: previous hop overhears the next transmission") {
  // data_fwd = 1.0, header_rx = 0.06, reserve = 0.02
  RunConfig cfg = two_hop_config(1, raw_for(0.5, 20, 120), 10, 1000);
  Engine eng(cfg);
  ForwardResult fr = eng.forward_packet(PacketEvent{0, 0.5, 0});
  CHECK(fr.delivered);
  // node 1 pays the forward then overhears node 3; node 3 (last) overhears nothing
  CHECK(eng.energies()[1].level == doctest::Approx(8.94).epsilon(1e-12));
  CHECK(eng.energies()[3].level == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(eng.energies()[2].level == 10.0);
}

TEST_CASE("forward_packet: boundary refusal drops downstream, upstream spend stays") {
  // data_fwd = 1.0, reserve = 0.25: a node at exactly 1.25 refuses
  RunConfig cfg = two_hop_config(1, raw_for(0.5, 250), 10, 1000);
  cfg.nodes[2].initial = 1.25;
  Engine eng(cfg);
  ForwardResult fr = eng.forward_packet(PacketEvent{0, 0.5, 0});
  CHECK_FALSE(fr.delivered);
  CHECK(fr.dropped_at == 3);
  CHECK(fr.dropped_hop == 2);
  CHECK(eng.energies()[1].level == 9.0);   // paid its forward before the drop
  CHECK(eng.energies()[3].level == 1.25);  // refusals are free
}

TEST_CASE("end_of_slot_status: reports, silence with stale report, zero cost") {
  // status_tx = 0.5
  RunConfig cfg = diamond_config(0, raw_for(0.5, 1000), 5.0, 1000, 0);
  Engine eng(cfg);
  auto silent = eng.end_of_slot_status();
  CHECK(silent.empty());
  CHECK(eng.energies()[1].level == 4.5);
  CHECK(eng.reported_levels()[1] == 4.5);
  CHECK(eng.reported_levels()[2] == 4.5);

  RunConfig poor = diamond_config(0, raw_for(0.5, 1000), 0.3, 1000, 0);
  Engine eng2(poor);
  silent = eng2.end_of_slot_status();
  CHECK(silent == std::vector<int>{1, 2});
  CHECK(eng2.energies()[1].level == 0.3);
  CHECK(eng2.reported_levels()[1] == 0.3);  // stale: still the initial report

  RunConfig free = diamond_config(0, raw_for(0.5, 0), 5.0, 1000, 0);
  Engine eng3(free);
  CHECK(eng3.end_of_slot_status().empty());
  CHECK(eng3.energies()[1].level == 5.0);
}

TEST_CASE("apply_control: charges all nodes or stops at the weakest") {
  // control_rx = 0.5
  RunConfig cfg = diamond_config(0, raw_for(0.5, 1000), 5.0, 1000, 0);
  Engine eng(cfg);
  auto fatal = eng.apply_control();
  CHECK_FALSE(fatal.has_value());
  CHECK(eng.energies()[1].level == 4.5);
  CHECK(eng.energies()[2].level == 4.5);

  RunConfig weak = diamond_config(0, raw_for(0.5, 1000), 5.0, 1000, 0);
  weak.nodes[1].initial = 0.4;
  Engine eng2(weak);
  fatal = eng2.apply_control();
  REQUIRE(fatal.has_value());
  CHECK(*fatal == 2);
  CHECK(eng2.energies()[1].level == 5.0);  // nothing charged on a fatal check
  CHECK(eng2.energies()[2].level == 0.4);
}

TEST_CASE("verify_initial_routing applies the switch rule once, free of charge") {
  RunConfig cfg = diamond_config(0, raw_for(0.5, 20), 10, 1000, 0);
  Engine eq(cfg);
  eq.verify_initial_routing();
  CHECK(eq.routing().active[0] == 1);  // equal batteries stay put

  RunConfig uneven = diamond_config(0, raw_for(0.5, 20), 10, 1000, 0);
  uneven.nodes[1].initial = 16;  // inactive exceeds active by 6 > h = 5
  Engine e2(uneven);
  e2.verify_initial_routing();
  CHECK(e2.routing().active[0] == 2);
  CHECK(e2.energies()[1].level == 10);
  CHECK(e2.energies()[2].level == 16);

  RunConfig better = diamond_config(0, raw_for(0.5, 20), 16, 1000, 0);
  better.nodes[1].initial = 10;  // active already the better path
  Engine e3(better);
  e3.verify_initial_routing();
  CHECK(e3.routing().active[0] == 1);
}

TEST_CASE("run_slot: inert slot leaves everything but the clock") {
  RunConfig cfg = diamond_config(0, raw_for(0.5, 0), 7.0, 1000, 0);
  Engine eng(cfg);
  SlotOutcome out = eng.run_slot();
  CHECK(out.slot == 1);
  CHECK(out.sent[0] == 0);
  CHECK_FALSE(out.any_decision);
  CHECK(eng.energies()[1].level == 7.0);
  CHECK(eng.energies()[2].level == 7.0);
  CHECK(eng.routing().active[0] == 1);
}

TEST_CASE("run_slot: active node follows the drain recurrence") {
  // g*data_fwd + status_tx - e per slot while active, far from any switch
  RunConfig cfg = diamond_config(4, raw_for(0.5, 100), 500, 1e9, 0.25, 1e8);
  cfg.num_slots = 20;
  Engine eng(cfg);
  double expect1 = 500, expect2 = 500;
  for (int slot = 1; slot <= 20; ++slot) {
    eng.run_slot();
    expect1 += 0.25 - 4 * 1.0 - 0.05;  // harvest - data - status
    expect2 += 0.25 - 0.05;
    CHECK(eng.energies()[1].level == doctest::Approx(expect1).epsilon(1e-12));
    CHECK(eng.energies()[2].level == doctest::Approx(expect2).epsilon(1e-12));
  }
}

TEST_CASE("run: zero slots yields empty stats") {
  RunConfig cfg = diamond_config(3, raw_for(0.5, 20), 10, 1000, 1);
  cfg.num_slots = 0;
  cfg.num_ss_slots = 0;
  Engine eng(cfg);
  RunResult r = eng.run();
  CHECK(r.stats.total_slots == 0);
  CHECK(r.stats.sent[0] == 0);
  CHECK(r.stats.delivered[0] == 0);
  CHECK(r.stats.trace.empty());
}

TEST_CASE("run: identical seed gives an identical outcome stream") {
  RunConfig cfg = diamond_config(5, raw_for(0.05, 100), 20, 40, 0.3);
  cfg.strategy = StrategyKind::Estimate;
  cfg.num_slots = 300;
  cfg.num_ss_slots = 300;
  cfg.seed = 12345;
  Engine a(cfg), b(cfg);
  RunResult ra = a.run(), rb = b.run();
  REQUIRE(ra.stats.total_slots == rb.stats.total_slots);
  for (long i = 0; i < ra.stats.total_slots; ++i) {
    auto k = static_cast<std::size_t>(i);
    CHECK(ra.stats.trace[k].levels == rb.stats.trace[k].levels);
    CHECK(ra.stats.slot_delivered[k] == rb.stats.slot_delivered[k]);
    CHECK(ra.stats.trace[k].active == rb.stats.trace[k].active);
    CHECK(ra.stats.trace[k].rates == rb.stats.trace[k].rates);
  }
}

TEST_CASE("run: replaying recorded schedules reproduces the run exactly") {
  RunConfig cfg = diamond_config(4, raw_for(0.05, 100), 20, 40, 0.3);
  cfg.strategy = StrategyKind::FeedbackWithDangerZones;
  cfg.num_slots = 200;
  cfg.num_ss_slots = 200;
  Engine original(cfg);
  RunResult first = original.run();

  Engine replayer(cfg);
  replayer.set_replay(first.schedules);
  RunResult second = replayer.run();
  REQUIRE(second.stats.total_slots == first.stats.total_slots);
  for (long i = 0; i < first.stats.total_slots; ++i) {
    auto k = static_cast<std::size_t>(i);
    CHECK(first.stats.trace[k].levels == second.stats.trace[k].levels);
    CHECK(first.stats.slot_sent[k] == second.stats.slot_sent[k]);
  }
}

TEST_CASE("fatal stop: a node that cannot receive the command ends the run") {
  // status 3 mJ, command 2 mJ; a silent starving node on an idle source's
  // path dies when the other source's switch forces a command broadcast.
  RunConfig cfg;
  Topology t(2, 4);
  for (int i = 1; i <= 4; ++i) t.add_link(t.intermediate(i), t.destination());
  t.add_link(t.source(1), t.intermediate(1));
  t.add_link(t.source(1), t.intermediate(2));
  t.add_link(t.source(2), t.intermediate(3));
  t.add_link(t.source(2), t.intermediate(4));
  t.set_path(1, 1, {t.intermediate(1)});
  t.set_path(1, 2, {t.intermediate(2)});
  t.set_path(2, 1, {t.intermediate(3)});
  t.set_path(2, 2, {t.intermediate(4)});
  cfg.topology = t;
  cfg.raw_energy = raw_for(0.5, 4000, 0, 0.75);  // status 3, command 2, data_fwd 1.25
  cfg.strategy = StrategyKind::NoFeedback;
  cfg.num_slots = 10;
  cfg.num_ss_slots = 10;
  cfg.sources.push_back(SourceParams{6, 3, 3, 1});
  cfg.sources.push_back(SourceParams{0, 3, 3, 1});
  for (int i = 0; i < 4; ++i) {
    NodeParams np;
    np.initial = i < 2 ? 10.0 : 1.0;  // nodes 3 and 4 cannot afford the command
    np.b_max = 1000;
    np.harvest.rate = 0;
    cfg.nodes.push_back(np);
  }
  Engine eng(cfg);
  RunResult r = eng.run();
  REQUIRE(r.stats.fatal.has_value());
  CHECK(r.stats.fatal->node == 3);
  CHECK(r.stats.fatal->slot == 1);
  CHECK(r.stats.total_slots == 1);  // partial trace preserved
  CHECK(r.stats.trace.size() == 1);
}

TEST_CASE("no-feedback runs never move the rate") {
  RunConfig cfg = diamond_config(7, raw_for(0.05, 100), 45, 100, 0.5);
  cfg.num_slots = 2000;
  cfg.num_ss_slots = 2000;
  Engine eng(cfg);
  RunResult r = eng.run();
  for (const TraceRow& row : r.stats.trace) CHECK(row.rates[0] == 7);
}

TEST_CASE("no-feedback symmetric diamond balances switch directions") {
  RunConfig cfg = diamond_config(12, raw_for(0.05, 100), 45, 100, 0.35);
  cfg.num_slots = 5000;
  cfg.num_ss_slots = 5000;
  Engine eng(cfg);
  RunResult r = eng.run();
  long to_2 = 0, to_1 = 0;
  int active = 1;
  for (const TraceRow& row : r.stats.trace) {
    if (row.active[0] != active) {
      (row.active[0] == 2 ? to_2 : to_1) += 1;
      active = row.active[0];
    }
  }
  CHECK(to_1 + to_2 > 10);  // the run oscillates
  CHECK(std::abs(to_1 - to_2) <= 1);
}

TEST_CASE("silent status reports are counted as flags") {
  RunConfig cfg = diamond_config(0, raw_for(0.5, 1000), 0.3, 1000, 0);  // status 0.5
  cfg.num_slots = 3;
  cfg.num_ss_slots = 3;
  Engine eng(cfg);
  RunResult r = eng.run();
  CHECK(r.stats.silent_status_events == 6);  // both nodes, all three slots
}

TEST_CASE("switch-times debug stream logs slot 1 and every switch") {
  RunConfig cfg = diamond_config(12, raw_for(0.05, 100), 45, 100, 0.35);
  cfg.num_slots = 800;
  cfg.num_ss_slots = 800;
  std::ostringstream log;
  Engine eng(cfg);
  eng.set_debug_streams(&log, nullptr, nullptr);
  RunResult r = eng.run();
  long switch_slots = 0;
  for (long i = 0; i < r.stats.total_slots; ++i) {
    // a switch happened when the next slot runs on another path
    if (i + 1 < r.stats.total_slots &&
        r.stats.trace[static_cast<std::size_t>(i)].active !=
            r.stats.trace[static_cast<std::size_t>(i + 1)].active)
      ++switch_slots;
  }
  long lines = 0;
  std::string text = log.str(), line;
  std::istringstream is(text);
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines >= switch_slots + 1);  // slot 1 plus each switch slot
  CHECK(text.find("slot=1 ") != std::string::npos);
  CHECK(text.find("levels=[") != std::string::npos);
}

TEST_CASE("strategy debug stream carries switch-time decisions and drift") {
  RunConfig cfg = diamond_config(8, raw_for(0.025, 200, 100), 45, 100, 0.5);
  cfg.strategy = StrategyKind::Estimate;
  cfg.num_slots = 3000;
  cfg.num_ss_slots = 3000;
  std::ostringstream strategy_log;
  Engine eng(cfg);
  eng.set_debug_streams(nullptr, &strategy_log, nullptr);
  eng.run();
  std::string s = strategy_log.str();
  CHECK(s.find("type=back") != std::string::npos);
  CHECK(s.find("drift=") != std::string::npos);
  CHECK(s.find("delta4=") != std::string::npos);
  CHECK(s.find("min_level=") != std::string::npos);
  CHECK(s.find("shift executed") != std::string::npos);
}

TEST_CASE("non-switch shift debug stream logs the Bmax climb") {
  // huge thresholds: no switches, the rate climbs only while pinned at b_max
  RunConfig cfg = diamond_config(1, raw_for(0.025, 200, 100), 45, 100, 0.5, 1e9);
  cfg.strategy = StrategyKind::Estimate;
  cfg.num_slots = 400;
  cfg.num_ss_slots = 400;
  std::ostringstream nonswitch_log;
  Engine eng(cfg);
  eng.set_debug_streams(nullptr, nullptr, &nonswitch_log);
  RunResult r = eng.run();
  CHECK(nonswitch_log.str().find("shift +1 rate=") != std::string::npos);
  CHECK(r.stats.trace.back().rates[0] > 1);
}

TEST_CASE("ledger replay, conservation, isolation, oracle equivalence") {
  int checked_drops = 0;
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    bf::RandomInstance inst = bf::random_instance(seed);
    std::vector<LedgerEntry> ledger;
    Engine eng(inst.config);
    eng.set_ledger(&ledger);
    RunResult result = eng.run();
    const RunStats& st = result.stats;

    // ledger fold reproduces every end-of-slot level bit-exactly
    {
      std::vector<double> level(static_cast<std::size_t>(st.num_intermediates) + 1, 0);
      for (int u = 1; u <= st.num_intermediates; ++u)
        level[static_cast<std::size_t>(u)] = inst.config.nodes[static_cast<std::size_t>(u - 1)].initial;
      std::size_t pos = 0;
      for (long slot = 1; slot <= st.total_slots; ++slot) {
        while (pos < ledger.size() && ledger[pos].slot == slot) {
          const LedgerEntry& e = ledger[pos];
          auto k = static_cast<std::size_t>(e.node);
          if (e.op == LedgerOp::Harvest)
            level[k] = std::min(level[k] + e.amount,
                                inst.config.nodes[k - 1].b_max);
          else
            level[k] -= e.amount;
          ++pos;
        }
        const TraceRow& row = st.trace[static_cast<std::size_t>(slot - 1)];
        for (int u = 1; u <= st.num_intermediates; ++u)
          CHECK(level[static_cast<std::size_t>(u)] == row.levels[static_cast<std::size_t>(u)]);
      }
      CHECK(pos == ledger.size());
    }

    // conservation and rate bounds, per slot and per source
    for (long i = 0; i < st.total_slots; ++i) {
      auto k = static_cast<std::size_t>(i);
      for (int s = 0; s < st.num_sources; ++s) {
        auto j = static_cast<std::size_t>(s);
        CHECK(st.slot_sent[k][j] ==
              st.slot_delivered[k][j] + st.slot_dropped[k][j]);
        CHECK(st.slot_delivered[k][j] <= inst.config.sources[j].rate);
        if (st.slot_dropped[k][j] > 0) ++checked_drops;
      }
    }

    // nodes outside every active path never pay data or overhearing costs
    for (const LedgerEntry& e : ledger) {
      if (e.op != LedgerOp::SpendData && e.op != LedgerOp::SpendOverhear) continue;
      const TraceRow& row = st.trace[static_cast<std::size_t>(e.slot - 1)];
      auto mask = listening_set(inst.config.topology, RoutingState{row.active});
      CHECK(mask[static_cast<std::size_t>(e.node)] == 1);
    }

    // the straight-line oracle agrees on outcomes and levels
    bf::MiniResult oracle = bf::simulate(inst.net, result.schedules, inst.config.num_slots);
    REQUIRE(oracle.slots.size() == static_cast<std::size_t>(st.total_slots));
    for (long i = 0; i < st.total_slots; ++i) {
      auto k = static_cast<std::size_t>(i);
      CHECK(oracle.slots[k].delivered == st.slot_delivered[k]);
      CHECK(oracle.slots[k].dropped == st.slot_dropped[k]);
      bool fatal_here = st.fatal && st.fatal->slot == i + 1;
      CHECK(oracle.slots[k].fatal == fatal_here);
      if (fatal_here) CHECK(oracle.slots[k].fatal_node == st.fatal->node);
      for (int u = 1; u <= st.num_intermediates; ++u)
        CHECK(oracle.slots[k].levels[static_cast<std::size_t>(u)] ==
              st.trace[k].levels[static_cast<std::size_t>(u)]);
    }
  }
  CHECK(checked_drops > 0);  // the instance pool must exercise the drop path
}
