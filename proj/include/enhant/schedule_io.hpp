#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "enhant/engine.hpp"

namespace enhant {

// Packet schedule record: one line per slot, "slot;source:time,source:time,...",
// sources 1-based, times with 17 significant digits so a replay is bit-exact.
inline void write_schedule(std::ostream& os, const std::vector<SlotSchedule>& schedules) {
  char buf[64];
  for (const SlotSchedule& sched : schedules) {
    os << sched.slot << ";";
    for (std::size_t i = 0; i < sched.events.size(); ++i) {
      const PacketEvent& ev = sched.events[i];
      std::snprintf(buf, sizeof buf, "%.17g", ev.time);
      if (i) os << ",";
      os << (ev.source + 1) << ":" << buf;
    }
    os << "\n";
  }
}

inline void write_schedule_file(const std::string& path, const std::vector<SlotSchedule>& schedules) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write schedule file: " + path);
  write_schedule(os, schedules);
}

inline std::vector<SlotSchedule> read_schedule(std::istream& is) {
  std::vector<SlotSchedule> out;
  std::string line;
  long expected_slot = 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto semi = line.find(';');
    if (semi == std::string::npos)
      throw std::runtime_error("schedule line " + std::to_string(expected_slot) + ": missing ';'");
    SlotSchedule sched;
    sched.slot = std::stol(line.substr(0, semi));
    if (sched.slot != expected_slot)
      throw std::runtime_error("schedule line " + std::to_string(expected_slot) +
                               ": unexpected slot number " + std::to_string(sched.slot));
    std::string rest = line.substr(semi + 1);
    long seq = 0;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      auto colon = item.find(':');
      if (colon == std::string::npos)
        throw std::runtime_error("schedule line " + std::to_string(expected_slot) +
                                 ": malformed event '" + item + "'");
      int source = std::stoi(item.substr(0, colon)) - 1;
      double time = std::strtod(item.substr(colon + 1).c_str(), nullptr);
      sched.events.push_back(PacketEvent{source, time, seq++});
    }
    // records are written sorted; re-sorting only matters for edited files
    std::sort(sched.events.begin(), sched.events.end(),
              [](const PacketEvent& a, const PacketEvent& b) {
                if (a.time != b.time) return a.time < b.time;
                return a.seq < b.seq;
              });
    out.push_back(std::move(sched));
    expected_slot += 1;
  }
  return out;
}

inline std::vector<SlotSchedule> read_schedule_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read schedule file: " + path);
  return read_schedule(is);
}

// Pre-run checks: the record must cover the configured run and only name
// declared sources.
inline void validate_schedule(const std::vector<SlotSchedule>& schedules, int num_sources,
                              long num_slots) {
  if (static_cast<long>(schedules.size()) < num_slots)
    throw std::runtime_error("schedule record has " + std::to_string(schedules.size()) +
                             " slots, run needs " + std::to_string(num_slots));
  for (const SlotSchedule& sched : schedules)
    for (const PacketEvent& ev : sched.events)
      if (ev.source < 0 || ev.source >= num_sources)
        throw std::runtime_error("schedule slot " + std::to_string(sched.slot) +
                                 ": source index out of range");
}

}  // namespace enhant
