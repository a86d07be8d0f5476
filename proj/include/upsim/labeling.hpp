#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "upsim/forwarding.hpp"
#include "upsim/topology.hpp"

namespace upsim {

/**
 * Per-node certificate for one flow's route. dist counts hops remaining to
 * the flow destination: only the destination carries dist 0 (and then has no
 * successor); only the source has no predecessor.
 */
struct FlowLabel {
  FlowTag flow;
  std::optional<NodeId> pred;
  std::optional<NodeId> succ;
  unsigned dist = 0;

  bool operator==(const FlowLabel&) const = default;
};

/**
 * Per-node certificate for one destination tree. depth counts hops to the
 * destination along the tree; version orders whole trees, newest wins.
 * depth 0, no parent and owner == destination coincide by construction.
 */
struct TreeLabel {
  NodeId destination = 0;
  std::optional<NodeId> parent;
  unsigned depth = 0;
  unsigned version = 0;

  bool operator==(const TreeLabel&) const = default;
};

// Local verifier output. NO always carries a stable enumerated reason so
// traces can be diffed by machines.
struct Verdict {
  bool yes = true;
  std::string reason;  // empty on YES

  static Verdict ok() { return {}; }
  static Verdict no(std::string r) { return {false, std::move(r)}; }
};

// Stable NO reasons shared by the verifiers.
namespace reason {
inline constexpr const char* kDistZeroNotDestination = "dist-zero-not-destination";
inline constexpr const char* kSuccMissing = "succ-missing";
inline constexpr const char* kSuccNotNeighbor = "succ-not-neighbor";
inline constexpr const char* kSuccNotApplied = "succ-not-applied";
inline constexpr const char* kFlowMismatch = "flow-mismatch";
inline constexpr const char* kDistNotDecrement = "dist-not-decrement";
inline constexpr const char* kPredSuccMismatch = "pred-succ-mismatch";
inline constexpr const char* kPredNotApplied = "pred-not-applied";
inline constexpr const char* kDepthZeroNotDestination = "depth-zero-not-destination";
inline constexpr const char* kParentMissing = "parent-missing";
inline constexpr const char* kParentNotNeighbor = "parent-not-neighbor";
inline constexpr const char* kParentNoLabel = "parent-no-label";
inline constexpr const char* kDestinationMismatch = "destination-mismatch";
inline constexpr const char* kDepthNotDecrement = "depth-not-decrement";
inline constexpr const char* kParentVersionBehind = "parent-version-behind";
inline constexpr const char* kNoRuleForDestination = "no-rule-for-destination";
}  // namespace reason

// What each neighbor currently exposes: its applied label for the route under
// consideration, or nothing. Maps cover exactly neighbors(v).
using FlowNeighborhood = std::map<NodeId, std::optional<FlowLabel>>;
using TreeNeighborhood = std::map<NodeId, std::optional<TreeLabel>>;

// Assigns distance labels along a simple path [source, ..., destination]:
// the destination gets dist 0, each predecessor one more.
// Throws NonSimplePath for repeated nodes or paths shorter than two nodes,
// NonAdjacentHop when consecutive nodes are not linked.
std::map<NodeId, FlowLabel> prove_flow(const Graph& g,
                                       const std::vector<NodeId>& path,
                                       const FlowTag& flow);

// YES iff v is the flow destination (dist 0, no succ), or v's successor is a
// neighbor exposing an applied label for the same flow with dist = own.dist-1.
// Additionally: if own.pred = u and u exposes a label for this flow, u's succ
// must be v.
Verdict verify_flow_local(NodeId v, const FlowLabel& own,
                          const FlowNeighborhood& nbr_labels);

// Assigns depth labels for a rooted tree given as child -> parent (the
// destination maps to nothing). Throws NotATree when parents do not form a
// single tree rooted at destination, NonAdjacentHop when a parent is not a
// graph neighbor.
std::map<NodeId, TreeLabel> prove_tree(
    const Graph& g, const std::map<NodeId, std::optional<NodeId>>& parents,
    NodeId destination, unsigned version);

// YES iff v is the destination (depth 0, no parent), or parent is a neighbor
// exposing a label for the same destination and either it has the same
// version with depth exactly one less, or a strictly higher version.
Verdict verify_tree_local(NodeId v, const TreeLabel& own,
                          const TreeNeighborhood& nbr_labels);

// Gate for switching to a pending flow label: true iff v is the destination
// in the pending route, or the pending successor already exposes an applied
// label for the same flow with dist = pending.dist - 1.
bool may_apply_flow(NodeId v, const FlowLabel& pending,
                    const FlowNeighborhood& nbr_applied);

// Gate for switching to a pending tree label. Never true unless
// pending.version exceeds current_version (monotonicity guard). True iff v is
// the destination in the pending tree, or the pending parent's current label
// has exactly pending.version and depth = pending.depth - 1. A node may skip
// versions: the gate only inspects the pending label and the parent's
// current one.
bool may_apply_tree(NodeId v, const TreeLabel& pending,
                    const TreeNeighborhood& nbr_current,
                    std::optional<unsigned> current_version);

}  // namespace upsim
