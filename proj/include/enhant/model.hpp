#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace enhant {

// Flat node id space: 0 is the destination, 1..N are the harvesting
// intermediates (numbered as in the figures), N+1..N+S are the sources.
struct NodeId {
  int raw = -1;

  friend bool operator==(NodeId a, NodeId b) { return a.raw == b.raw; }
  friend bool operator!=(NodeId a, NodeId b) { return a.raw != b.raw; }
  friend bool operator<(NodeId a, NodeId b) { return a.raw < b.raw; }
};

// Static network description: adjacency plus the two pre-assigned paths of
// every source. Paths are ordered source-to-destination and list only
// intermediate nodes; the destination hop is implicit.
class Topology {
 public:
  Topology() = default;
  Topology(int num_sources, int num_intermediates)
      : num_sources_(num_sources),
        num_intermediates_(num_intermediates),
        adj_(static_cast<std::size_t>(total()) * total(), 0),
        paths_(static_cast<std::size_t>(num_sources) * 2) {}

  int num_sources() const { return num_sources_; }
  int num_intermediates() const { return num_intermediates_; }
  int total() const { return 1 + num_intermediates_ + num_sources_; }

  NodeId destination() const { return NodeId{0}; }
  NodeId intermediate(int i) const { return NodeId{i}; }  // 1..N
  NodeId source(int s) const { return NodeId{num_intermediates_ + s}; }  // s in 1..S

  bool is_intermediate(NodeId n) const { return n.raw >= 1 && n.raw <= num_intermediates_; }
  bool is_source(NodeId n) const { return n.raw > num_intermediates_ && n.raw < total(); }
  bool is_destination(NodeId n) const { return n.raw == 0; }

  // Human-readable label: "d", "3", "s2".
  std::string label(NodeId n) const {
    if (is_destination(n)) return "d";
    if (is_source(n)) return "s" + std::to_string(n.raw - num_intermediates_);
    return std::to_string(n.raw);
  }

  void add_link(NodeId a, NodeId b) {
    adj_[idx(a, b)] = 1;
    adj_[idx(b, a)] = 1;
  }

  bool adjacent(NodeId a, NodeId b) const { return adj_[idx(a, b)] != 0; }

  // which is 1 or 2; source_index is 1..S.
  void set_path(int source_index, int which, std::vector<NodeId> nodes) {
    paths_[path_slot(source_index, which)] = std::move(nodes);
  }

  const std::vector<NodeId>& path(int source_index, int which) const {
    return paths_[path_slot(source_index, which)];
  }

 private:
  std::size_t idx(NodeId a, NodeId b) const {
    return static_cast<std::size_t>(a.raw) * total() + b.raw;
  }
  std::size_t path_slot(int source_index, int which) const {
    return static_cast<std::size_t>(source_index - 1) * 2 + (which - 1);
  }

  int num_sources_ = 0;
  int num_intermediates_ = 0;
  std::vector<std::uint8_t> adj_;
  std::vector<std::vector<NodeId>> paths_;
};

// Active-path selector per source, values in {1, 2}.
struct RoutingState {
  std::vector<int> active;
};

// Structural checks: path connectivity over declared links, duplicate-free
// paths, and the neighbor-loop-free assumption (no path node may neighbor a
// non-adjacent node of the same path). Violations are returned as data; the
// caller decides whether to abort.
inline std::vector<std::string> validate_topology(const Topology& t) {
  std::vector<std::string> out;
  for (int s = 1; s <= t.num_sources(); ++s) {
    for (int which = 1; which <= 2; ++which) {
      const auto& path = t.path(s, which);
      std::string where = "source " + std::to_string(s) + " path " + std::to_string(which);
      if (path.empty()) {
        out.push_back(where + ": empty path");
        continue;
      }
      for (NodeId n : path) {
        if (!t.is_intermediate(n))
          out.push_back(where + ": node " + std::to_string(n.raw) + " is not an intermediate");
      }
      std::set<int> seen;
      for (NodeId n : path) {
        if (!seen.insert(n.raw).second)
          out.push_back(where + ": duplicate node " + t.label(n));
      }
      if (!t.adjacent(t.source(s), path.front()))
        out.push_back(where + ": adjacency gap at " + t.label(t.source(s)) + "->" +
                      t.label(path.front()));
      for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!t.adjacent(path[i], path[i + 1]))
          out.push_back(where + ": adjacency gap at hop " + t.label(path[i]) + "->" +
                        t.label(path[i + 1]));
      }
      if (!t.adjacent(path.back(), t.destination()))
        out.push_back(where + ": adjacency gap at " + t.label(path.back()) + "->d");
      // Neighbor-loop-free: on-path neighbors must be the immediate
      // predecessor or successor only.
      for (std::size_t i = 0; i < path.size(); ++i) {
        for (std::size_t j = 0; j < path.size(); ++j) {
          if (i == j) continue;
          bool consecutive = (j + 1 == i) || (i + 1 == j);
          if (!consecutive && t.adjacent(path[i], path[j])) {
            if (i < j)
              out.push_back(where + ": neighbor-loop at node " + t.label(path[i]) +
                            " (link to " + t.label(path[j]) + ")");
          }
        }
      }
    }
  }
  return out;
}

// Nodes appearing on both paths of a source. These are excluded from the
// switch minima and handled by the dedicated down-shift rule instead.
inline std::set<int> omit_set(const Topology& t, int source_index) {
  std::set<int> first;
  for (NodeId n : t.path(source_index, 1)) first.insert(n.raw);
  std::set<int> out;
  for (NodeId n : t.path(source_index, 2))
    if (first.count(n.raw)) out.insert(n.raw);
  return out;
}

struct PathMin {
  NodeId node;
  double level = 0;
};

// Minimum-energy node of a path, skipping omitted nodes. Ties go to the
// earliest path position so replays stay deterministic. levels is indexed by
// raw node id.
inline std::optional<PathMin> min_on_path(std::span<const double> levels,
                                          const std::vector<NodeId>& path,
                                          const std::set<int>& omit) {
  std::optional<PathMin> best;
  for (NodeId n : path) {
    if (omit.count(n.raw)) continue;
    double lv = levels[static_cast<std::size_t>(n.raw)];
    if (!best || lv < best->level) best = PathMin{n, lv};
  }
  return best;
}

// Mask over raw node ids: nodes on some source's active path. Only these
// spend energy during the data phase of a slot.
inline std::vector<std::uint8_t> listening_set(const Topology& t, const RoutingState& r) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(t.num_intermediates()) + 1, 0);
  for (int s = 1; s <= t.num_sources(); ++s)
    for (NodeId n : t.path(s, r.active[static_cast<std::size_t>(s - 1)]))
      mask[static_cast<std::size_t>(n.raw)] = 1;
  return mask;
}

}  // namespace enhant
