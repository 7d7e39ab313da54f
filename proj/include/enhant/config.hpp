#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "enhant/engine.hpp"

namespace enhant {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadedConfig {
  RunConfig config;
  std::vector<std::string> warnings;
};

namespace cfg_detail {

using nlohmann::json;

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
}

inline const json& get_required(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key + ": missing required field");
  return *it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return j.get<long>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

inline double non_negative(const json& j, const std::string& path) {
  double v = as_number(j, path);
  if (v < 0) throw ConfigError(path + ": must be non-negative");
  return v;
}

// A link endpoint: an intermediate number, "d", or "s<k>".
inline NodeId parse_node_ref(const json& j, const Topology& t, const std::string& path) {
  if (j.is_number_integer()) {
    long v = j.get<long>();
    if (v < 1 || v > t.num_intermediates())
      throw ConfigError(path + ": intermediate index out of range");
    return t.intermediate(static_cast<int>(v));
  }
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s == "d") return t.destination();
    if (s.size() >= 2 && s[0] == 's') {
      int k = std::atoi(s.c_str() + 1);
      if (k >= 1 && k <= t.num_sources()) return t.source(k);
    }
    throw ConfigError(path + ": unknown node reference '" + s + "'");
  }
  throw ConfigError(path + ": expected an intermediate number, \"d\", or \"s<k>\"");
}

inline std::vector<double> load_harvest_trace(const std::string& file, const std::string& path) {
  std::ifstream is(file);
  if (!is) throw ConfigError(path + ": cannot open trace file '" + file + "'");
  std::vector<double> values;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw ConfigError(path + ": bad trace value '" + line + "'");
    if (v < 0) throw ConfigError(path + ": trace values must be non-negative");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError(path + ": trace file '" + file + "' is empty");
  return values;
}

inline StrategyKind parse_strategy(const std::string& name, const std::string& path) {
  if (name == "no-feedback") return StrategyKind::NoFeedback;
  if (name == "fwdz") return StrategyKind::FeedbackWithDangerZones;
  if (name == "estimate") return StrategyKind::Estimate;
  throw ConfigError(path + ": unknown strategy '" + name +
                    "' (expected no-feedback, fwdz or estimate)");
}

inline std::string strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::NoFeedback: return "no-feedback";
    case StrategyKind::FeedbackWithDangerZones: return "fwdz";
    default: return "estimate";
  }
}

}  // namespace cfg_detail

// Parses and fully validates a run config. base_dir resolves relative
// harvest trace paths.
inline LoadedConfig parse_config(const nlohmann::json& root, const std::string& base_dir) {
  using namespace cfg_detail;
  LoadedConfig out;
  RunConfig& cfg = out.config;

  require_object(root, "config");
  check_keys(root, {"topology", "energy", "simulation", "sources", "nodes"}, "config");

  // --- topology ---
  const json& jt = get_required(root, "topology", "config");
  require_object(jt, "topology");
  check_keys(jt, {"num_sources", "num_intermediates", "links", "paths", "positions"}, "topology");
  long ns = as_integer(get_required(jt, "num_sources", "topology"), "topology.num_sources");
  long ni = as_integer(get_required(jt, "num_intermediates", "topology"),
                       "topology.num_intermediates");
  if (ns < 1) throw ConfigError("topology.num_sources: must be at least 1");
  if (ni < 1) throw ConfigError("topology.num_intermediates: must be at least 1");
  Topology topo(static_cast<int>(ns), static_cast<int>(ni));

  const json& jlinks = get_required(jt, "links", "topology");
  if (!jlinks.is_array()) throw ConfigError("topology.links: expected an array");
  for (std::size_t i = 0; i < jlinks.size(); ++i) {
    std::string lp = "topology.links[" + std::to_string(i) + "]";
    const json& jl = jlinks[i];
    if (!jl.is_array() || jl.size() != 2) throw ConfigError(lp + ": expected a pair");
    NodeId a = parse_node_ref(jl[0], topo, lp + "[0]");
    NodeId b = parse_node_ref(jl[1], topo, lp + "[1]");
    if (a == b) throw ConfigError(lp + ": self-link");
    topo.add_link(a, b);
  }

  const json& jpaths = get_required(jt, "paths", "topology");
  if (!jpaths.is_array() || static_cast<long>(jpaths.size()) != ns)
    throw ConfigError("topology.paths: expected one entry per source");
  for (long s = 0; s < ns; ++s) {
    std::string pp = "topology.paths[" + std::to_string(s) + "]";
    const json& jp = jpaths[static_cast<std::size_t>(s)];
    require_object(jp, pp);
    check_keys(jp, {"path1", "path2"}, pp);
    for (int which = 1; which <= 2; ++which) {
      std::string key = which == 1 ? "path1" : "path2";
      const json& ja = get_required(jp, key, pp);
      if (!ja.is_array() || ja.empty())
        throw ConfigError(pp + "." + key + ": expected a non-empty array");
      std::vector<NodeId> nodes;
      for (std::size_t k = 0; k < ja.size(); ++k) {
        long v = as_integer(ja[k], pp + "." + key + "[" + std::to_string(k) + "]");
        if (v < 1 || v > ni)
          throw ConfigError(pp + "." + key + "[" + std::to_string(k) +
                            "]: intermediate index out of range");
        nodes.push_back(topo.intermediate(static_cast<int>(v)));
      }
      topo.set_path(static_cast<int>(s + 1), which, std::move(nodes));
    }
  }

  for (const std::string& v : validate_topology(topo)) throw ConfigError("topology: " + v);
  cfg.topology = topo;

  // --- energy ---
  const json& je = get_required(root, "energy", "config");
  require_object(je, "energy");
  check_keys(je,
             {"send_bit_energy", "receive_bit_energy", "data_packet_bits", "control_packet_bits",
              "data_header_bits", "control_header_bits", "equiv_detection_bits"},
             "energy");
  RawEnergyParams& raw = cfg.raw_energy;
  raw.send_bit_energy_uj = non_negative(get_required(je, "send_bit_energy", "energy"),
                                        "energy.send_bit_energy");
  raw.receive_bit_energy_uj = non_negative(get_required(je, "receive_bit_energy", "energy"),
                                           "energy.receive_bit_energy");
  raw.data_packet_bits = non_negative(get_required(je, "data_packet_bits", "energy"),
                                      "energy.data_packet_bits");
  raw.control_packet_bits = non_negative(get_required(je, "control_packet_bits", "energy"),
                                         "energy.control_packet_bits");
  raw.data_header_bits = non_negative(get_required(je, "data_header_bits", "energy"),
                                      "energy.data_header_bits");
  raw.control_header_bits = non_negative(get_required(je, "control_header_bits", "energy"),
                                         "energy.control_header_bits");
  raw.equiv_detection_bits = non_negative(get_required(je, "equiv_detection_bits", "energy"),
                                          "energy.equiv_detection_bits");
  if (raw.data_header_bits > raw.data_packet_bits)
    throw ConfigError("energy.data_header_bits: larger than data_packet_bits");
  if (raw.control_header_bits > raw.control_packet_bits)
    throw ConfigError("energy.control_header_bits: larger than control_packet_bits");

  // --- simulation ---
  const json& js = get_required(root, "simulation", "config");
  require_object(js, "simulation");
  check_keys(js,
             {"strategy", "num_slots", "num_ss_slots", "high_danger", "low_danger",
              "max_shift_pause_up", "max_shift_pause_down", "max_shift_pause_slot",
              "allowed_drift", "drift_mode", "seed"},
             "simulation");
  cfg.strategy = parse_strategy(as_string(get_required(js, "strategy", "simulation"),
                                          "simulation.strategy"),
                                "simulation.strategy");
  cfg.num_slots = js.contains("num_slots")
                      ? as_integer(js["num_slots"], "simulation.num_slots")
                      : 10000;
  if (cfg.num_slots < 0) throw ConfigError("simulation.num_slots: must be non-negative");
  cfg.num_ss_slots = js.contains("num_ss_slots")
                         ? as_integer(js["num_ss_slots"], "simulation.num_ss_slots")
                         : cfg.num_slots;
  if (cfg.num_ss_slots < 0 || cfg.num_ss_slots > cfg.num_slots)
    throw ConfigError("simulation.num_ss_slots: must be between 0 and num_slots");
  cfg.high_danger = js.contains("high_danger")
                        ? non_negative(js["high_danger"], "simulation.high_danger")
                        : 90.0;
  cfg.low_danger = js.contains("low_danger")
                       ? non_negative(js["low_danger"], "simulation.low_danger")
                       : 200.0;
  if (cfg.high_danger > cfg.low_danger)
    throw ConfigError("simulation.high_danger: larger than low_danger");
  auto pause = [&](const char* key, int dflt) {
    if (!js.contains(key)) return dflt;
    long v = as_integer(js[key], std::string("simulation.") + key);
    if (v < 0) throw ConfigError(std::string("simulation.") + key + ": must be non-negative");
    return static_cast<int>(v);
  };
  cfg.max_shift_pause_up = pause("max_shift_pause_up", 5);
  cfg.max_shift_pause_down = pause("max_shift_pause_down", 2);
  cfg.max_shift_pause_slot = pause("max_shift_pause_slot", 3);
  cfg.allowed_drift = js.contains("allowed_drift")
                          ? non_negative(js["allowed_drift"], "simulation.allowed_drift")
                          : 0.003;
  if (js.contains("drift_mode")) {
    std::string m = as_string(js["drift_mode"], "simulation.drift_mode");
    if (m == "two-path")
      cfg.drift_mode = DriftMode::TwoPathAverage;
    else if (m == "active-path")
      cfg.drift_mode = DriftMode::ActivePathOnly;
    else
      throw ConfigError("simulation.drift_mode: expected 'two-path' or 'active-path'");
  }
  if (js.contains("seed")) cfg.seed = static_cast<std::uint64_t>(as_integer(js["seed"], "simulation.seed"));

  // --- sources ---
  const json& jsrc = get_required(root, "sources", "config");
  if (!jsrc.is_array() || static_cast<long>(jsrc.size()) != ns)
    throw ConfigError("sources: expected one entry per source");
  for (long s = 0; s < ns; ++s) {
    std::string sp = "sources[" + std::to_string(s) + "]";
    const json& j = jsrc[static_cast<std::size_t>(s)];
    require_object(j, sp);
    check_keys(j, {"rate", "h1", "h2", "initial_route"}, sp);
    SourceParams p;
    long rate = as_integer(get_required(j, "rate", sp), sp + ".rate");
    if (rate < 0) throw ConfigError(sp + ".rate: must be non-negative");
    p.rate = static_cast<int>(rate);
    p.h1 = non_negative(get_required(j, "h1", sp), sp + ".h1");
    p.h2 = non_negative(get_required(j, "h2", sp), sp + ".h2");
    long route = as_integer(get_required(j, "initial_route", sp), sp + ".initial_route");
    if (route != 1 && route != 2) throw ConfigError(sp + ".initial_route: must be 1 or 2");
    p.initial_route = static_cast<int>(route);
    cfg.sources.push_back(p);
  }

  // --- nodes ---
  const json& jn = get_required(root, "nodes", "config");
  if (!jn.is_array() || static_cast<long>(jn.size()) != ni)
    throw ConfigError("nodes: expected one entry per intermediate node");
  EnergyCostModel costs = derive_costs(raw);
  for (long i = 0; i < ni; ++i) {
    std::string np = "nodes[" + std::to_string(i) + "]";
    const json& j = jn[static_cast<std::size_t>(i)];
    require_object(j, np);
    check_keys(j, {"harvest", "harvest_trace_file", "harvest_trace", "initial", "b_max", "pos"},
               np);
    NodeParams p;
    p.initial = non_negative(get_required(j, "initial", np), np + ".initial");
    p.b_max = non_negative(get_required(j, "b_max", np), np + ".b_max");
    if (p.b_max <= 0) throw ConfigError(np + ".b_max: must be positive");
    if (p.initial > p.b_max) throw ConfigError(np + ".initial: exceeds b_max");

    bool has_rate = j.contains("harvest");
    bool has_file = j.contains("harvest_trace_file");
    bool has_inline = j.contains("harvest_trace");
    if (!has_rate && !has_file && !has_inline)
      throw ConfigError(np + ".harvest: missing required field (or harvest_trace_file)");
    if (has_file && has_inline)
      throw ConfigError(np + ".harvest_trace: conflicts with harvest_trace_file");
    double rate = has_rate ? non_negative(j["harvest"], np + ".harvest") : 0.0;
    if (has_file) {
      std::string file = as_string(j["harvest_trace_file"], np + ".harvest_trace_file");
      std::filesystem::path fp(file);
      if (fp.is_relative() && !base_dir.empty()) fp = std::filesystem::path(base_dir) / fp;
      p.harvest.trace = load_harvest_trace(fp.string(), np + ".harvest_trace_file");
    } else if (has_inline) {
      const json& ja = j["harvest_trace"];
      if (!ja.is_array() || ja.empty())
        throw ConfigError(np + ".harvest_trace: expected a non-empty array");
      for (std::size_t k = 0; k < ja.size(); ++k)
        p.harvest.trace.push_back(
            non_negative(ja[k], np + ".harvest_trace[" + std::to_string(k) + "]"));
    } else {
      if (rate > 100.0)
        throw ConfigError(np + ".harvest: values above 100 select trace mode; "
                          "add harvest_trace_file");
      p.harvest.rate = rate;
    }
    if (has_rate && rate > 100.0 && (has_file || has_inline))
      out.warnings.push_back(np + ".harvest: value " + std::to_string(rate) +
                             " > 100 taken as trace mode (legacy convention)");
    // The danger bands and the Bmax band must not overlap or the zone
    // classification stops being a partition.
    if (costs.min_reserve + costs.data_fwd * cfg.low_danger >= 0.9 * p.b_max)
      throw ConfigError(np + ".b_max: low danger zone reaches into the Bmax zone "
                        "(raise b_max or lower low_danger)");
    cfg.nodes.push_back(p);
  }

  for (long s = 1; s <= ns; ++s) {
    std::set<int> omit = omit_set(cfg.topology, static_cast<int>(s));
    auto fully_omitted = [&](int which) {
      for (NodeId n : cfg.topology.path(static_cast<int>(s), which))
        if (!omit.count(n.raw)) return false;
      return true;
    };
    if (fully_omitted(1) || fully_omitted(2))
      out.warnings.push_back("sources[" + std::to_string(s - 1) +
                             "]: a path is fully shared between both paths; "
                             "switching disabled for this source");
  }

  return out;
}

// The normalized config as JSON; parse_config on the result reproduces an
// equivalent config. Harvest traces are inlined so manifests stand alone.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  using nlohmann::json;
  const Topology& t = cfg.topology;
  json root;

  json jt;
  jt["num_sources"] = t.num_sources();
  jt["num_intermediates"] = t.num_intermediates();
  json links = json::array();
  auto ref = [&](NodeId n) -> json {
    if (t.is_destination(n)) return "d";
    if (t.is_source(n)) return "s" + std::to_string(n.raw - t.num_intermediates());
    return n.raw;
  };
  for (int a = 0; a < t.total(); ++a)
    for (int b = a + 1; b < t.total(); ++b)
      if (t.adjacent(NodeId{a}, NodeId{b})) links.push_back(json::array({ref(NodeId{a}), ref(NodeId{b})}));
  jt["links"] = links;
  json paths = json::array();
  for (int s = 1; s <= t.num_sources(); ++s) {
    json jp;
    for (int which = 1; which <= 2; ++which) {
      json arr = json::array();
      for (NodeId n : t.path(s, which)) arr.push_back(n.raw);
      jp[which == 1 ? "path1" : "path2"] = arr;
    }
    paths.push_back(jp);
  }
  jt["paths"] = paths;
  root["topology"] = jt;

  json je;
  je["send_bit_energy"] = cfg.raw_energy.send_bit_energy_uj;
  je["receive_bit_energy"] = cfg.raw_energy.receive_bit_energy_uj;
  je["data_packet_bits"] = cfg.raw_energy.data_packet_bits;
  je["control_packet_bits"] = cfg.raw_energy.control_packet_bits;
  je["data_header_bits"] = cfg.raw_energy.data_header_bits;
  je["control_header_bits"] = cfg.raw_energy.control_header_bits;
  je["equiv_detection_bits"] = cfg.raw_energy.equiv_detection_bits;
  root["energy"] = je;

  json js;
  js["strategy"] = cfg_detail::strategy_name(cfg.strategy);
  js["num_slots"] = cfg.num_slots;
  js["num_ss_slots"] = cfg.num_ss_slots;
  js["high_danger"] = cfg.high_danger;
  js["low_danger"] = cfg.low_danger;
  js["max_shift_pause_up"] = cfg.max_shift_pause_up;
  js["max_shift_pause_down"] = cfg.max_shift_pause_down;
  js["max_shift_pause_slot"] = cfg.max_shift_pause_slot;
  js["allowed_drift"] = cfg.allowed_drift;
  js["drift_mode"] = cfg.drift_mode == DriftMode::TwoPathAverage ? "two-path" : "active-path";
  js["seed"] = cfg.seed;
  root["simulation"] = js;

  json jsrc = json::array();
  for (const SourceParams& p : cfg.sources) {
    json j;
    j["rate"] = p.rate;
    j["h1"] = p.h1;
    j["h2"] = p.h2;
    j["initial_route"] = p.initial_route;
    jsrc.push_back(j);
  }
  root["sources"] = jsrc;

  json jn = json::array();
  for (const NodeParams& p : cfg.nodes) {
    json j;
    j["initial"] = p.initial;
    j["b_max"] = p.b_max;
    if (p.harvest.trace.empty())
      j["harvest"] = p.harvest.rate;
    else
      j["harvest_trace"] = p.harvest.trace;
    jn.push_back(j);
  }
  root["nodes"] = jn;
  return root;
}

// Accepts either a plain config file or a run manifest (the manifest wraps
// the normalized config under "config").
inline LoadedConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::json root;
  try {
    is >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  std::string base_dir = std::filesystem::path(path).parent_path().string();
  if (root.is_object() && root.contains("config")) {
    LoadedConfig loaded = parse_config(root["config"], base_dir);
    if (root.contains("seed"))
      loaded.config.seed = root["seed"].get<std::uint64_t>();
    return loaded;
  }
  return parse_config(root, base_dir);
}

inline void write_manifest(const std::string& path, const RunConfig& cfg) {
  nlohmann::json root;
  root["config"] = config_to_json(cfg);
  root["seed"] = cfg.seed;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << root.dump(2) << "\n";
}

}  // namespace enhant
