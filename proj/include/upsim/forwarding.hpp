#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "upsim/topology.hpp"

namespace upsim {

// Flows are opaque tags ("F", "F2", ...).
using FlowTag = std::string;

// A rule matches either a flow tag or a destination node.
using MatchKey = std::variant<FlowTag, NodeId>;

std::string match_key_string(const MatchKey& m);

/**
 * Data-plane snapshot: at most one rule per (node, match key). Plain value
 * type so the simulator can copy and compare snapshots freely.
 */
class ForwardingState {
 public:
  explicit ForwardingState(std::size_t node_count) : rules_(node_count) {}

  // next_hop must be a neighbor of v in the graph the state is used with;
  // callers validate via Graph. Installing over an existing rule replaces it.
  void set_rule(NodeId v, const MatchKey& m, NodeId next_hop);
  void clear_rule(NodeId v, const MatchKey& m);

  // Absence of a rule is an ordinary value, not an error.
  std::optional<NodeId> next_hop(NodeId v, const MatchKey& m) const;

  std::size_t node_count() const { return rules_.size(); }
  const std::map<MatchKey, NodeId>& rules_at(NodeId v) const { return rules_[v]; }

  bool operator==(const ForwardingState&) const = default;

 private:
  std::vector<std::map<MatchKey, NodeId>> rules_;
};

struct BlackholeVerdict {
  bool ok = true;
  // Node where the offending walk stopped: a node without a rule, or for a
  // walk that cycles forever, the first node seen twice.
  std::optional<NodeId> witness;
  enum class Kind { None, MissingRule, Loop } kind = Kind::None;
};

// YES iff every walk from every source following next_hop reaches `dest`
// without hitting a missing rule (a cycling walk never reaches it either).
BlackholeVerdict check_blackhole_free(const ForwardingState& s, const Graph& g,
                                      const std::vector<NodeId>& sources,
                                      const MatchKey& m, NodeId dest);

struct LoopVerdict {
  bool ok = true;
  std::vector<NodeId> cycle;  // witness when !ok, in walk order
};

// YES iff the directed functional graph {v -> next_hop(v, m)} is acyclic.
// Detects cycles disconnected from any source or destination as well.
LoopVerdict check_loop_free(const ForwardingState& s, const Graph& g,
                            const MatchKey& m);

struct PacketDelivered {
  std::vector<NodeId> path;  // includes src and dest
};
struct PacketDropped {
  NodeId at;
};
struct PacketLooped {
  std::vector<NodeId> cycle;
};
using PacketResult = std::variant<PacketDelivered, PacketDropped, PacketLooped>;

// Follows rules for m from src. Delivered iff dest is reached within
// max_steps (default 2 * node_count). A revisited node yields Looped with the
// extracted cycle; a missing rule yields Dropped at that node.
PacketResult trace_packet(const ForwardingState& s, const Graph& g, NodeId src,
                          const MatchKey& m, NodeId dest,
                          std::size_t max_steps = 0);

}  // namespace upsim
