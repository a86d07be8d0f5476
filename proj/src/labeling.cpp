#include "upsim/labeling.hpp"

#include <algorithm>
#include <set>

namespace upsim {

std::map<NodeId, FlowLabel> prove_flow(const Graph& g,
                                       const std::vector<NodeId>& path,
                                       const FlowTag& flow) {
  if (path.size() < 2)
    throw NonSimplePath("path needs at least source and destination");
  std::set<NodeId> seen;
  for (NodeId v : path) {
    if (v >= g.node_count()) throw UnknownNode("path node " + std::to_string(v));
    if (!seen.insert(v).second)
      throw NonSimplePath("node " + std::to_string(v) + " repeats");
  }
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    if (!g.adjacent(path[i], path[i + 1]))
      throw NonAdjacentHop(std::to_string(path[i]) + " -> " +
                           std::to_string(path[i + 1]));

  std::map<NodeId, FlowLabel> labels;
  const std::size_t last = path.size() - 1;
  for (std::size_t i = 0; i < path.size(); ++i) {
    FlowLabel l;
    l.flow = flow;
    l.dist = static_cast<unsigned>(last - i);
    if (i > 0) l.pred = path[i - 1];
    if (i < last) l.succ = path[i + 1];
    labels[path[i]] = l;
  }
  return labels;
}

Verdict verify_flow_local(NodeId v, const FlowLabel& own,
                          const FlowNeighborhood& nbr_labels) {
  if (own.dist == 0) {
    // Destination anchor: nothing downstream to check.
    if (own.succ) return Verdict::no(reason::kDistZeroNotDestination);
  } else {
    if (!own.succ) return Verdict::no(reason::kSuccMissing);
    auto it = nbr_labels.find(*own.succ);
    if (it == nbr_labels.end()) return Verdict::no(reason::kSuccNotNeighbor);
    if (!it->second) return Verdict::no(reason::kSuccNotApplied);
    const FlowLabel& succ = *it->second;
    if (succ.flow != own.flow) return Verdict::no(reason::kFlowMismatch);
    if (succ.dist + 1 != own.dist) return Verdict::no(reason::kDistNotDecrement);
    if (succ.pred != std::optional<NodeId>(v))
      return Verdict::no(reason::kPredSuccMismatch);
  }
  if (own.pred) {
    auto it = nbr_labels.find(*own.pred);
    if (it == nbr_labels.end()) return Verdict::no(reason::kPredSuccMismatch);
    if (it->second && it->second->flow == own.flow &&
        it->second->succ != std::optional<NodeId>(v))
      return Verdict::no(reason::kPredSuccMismatch);
  }
  return Verdict::ok();
}

std::map<NodeId, TreeLabel> prove_tree(
    const Graph& g, const std::map<NodeId, std::optional<NodeId>>& parents,
    NodeId destination, unsigned version) {
  if (destination >= g.node_count())
    throw UnknownNode("destination " + std::to_string(destination));
  if (parents.size() != g.node_count())
    throw NotATree("parent map must cover every node");
  for (const auto& [v, p] : parents) {
    if (v >= g.node_count()) throw UnknownNode("node " + std::to_string(v));
    if (v == destination) {
      if (p) throw NotATree("destination must not have a parent");
      continue;
    }
    if (!p) throw NotATree("node " + std::to_string(v) + " has no parent");
    if (!g.adjacent(v, *p))
      throw NonAdjacentHop(std::to_string(v) + " -> parent " + std::to_string(*p));
  }

  // Depth by walking up; detects cycles and nodes not rooted at destination.
  std::map<NodeId, TreeLabel> labels;
  std::map<NodeId, unsigned> depth;
  depth[destination] = 0;
  for (const auto& [v, p] : parents) {
    std::vector<NodeId> chain;
    NodeId x = v;
    while (!depth.count(x)) {
      if (std::find(chain.begin(), chain.end(), x) != chain.end())
        throw NotATree("cycle through node " + std::to_string(x));
      chain.push_back(x);
      x = *parents.at(x);
    }
    unsigned d = depth[x];
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) depth[*it] = ++d;
  }
  for (const auto& [v, p] : parents) {
    TreeLabel l;
    l.destination = destination;
    l.parent = p;
    l.depth = depth[v];
    l.version = version;
    labels[v] = l;
  }
  return labels;
}

Verdict verify_tree_local(NodeId v, const TreeLabel& own,
                          const TreeNeighborhood& nbr_labels) {
  if (own.destination == v) {
    if (own.parent || own.depth != 0)
      return Verdict::no(reason::kDepthZeroNotDestination);
    return Verdict::ok();
  }
  if (own.depth == 0) return Verdict::no(reason::kDepthZeroNotDestination);
  if (!own.parent) return Verdict::no(reason::kParentMissing);
  auto it = nbr_labels.find(*own.parent);
  if (it == nbr_labels.end()) return Verdict::no(reason::kParentNotNeighbor);
  if (!it->second) return Verdict::no(reason::kParentNoLabel);
  const TreeLabel& parent = *it->second;
  if (parent.destination != own.destination)
    return Verdict::no(reason::kDestinationMismatch);
  if (parent.version > own.version) return Verdict::ok();
  if (parent.version < own.version)
    return Verdict::no(reason::kParentVersionBehind);
  if (parent.depth + 1 != own.depth)
    return Verdict::no(reason::kDepthNotDecrement);
  return Verdict::ok();
}

bool may_apply_flow(NodeId, const FlowLabel& pending,
                    const FlowNeighborhood& nbr_applied) {
  if (pending.dist == 0) return true;  // destination anchor
  if (!pending.succ) return false;
  auto it = nbr_applied.find(*pending.succ);
  if (it == nbr_applied.end() || !it->second) return false;
  const FlowLabel& succ = *it->second;
  return succ.flow == pending.flow && succ.dist + 1 == pending.dist;
}

bool may_apply_tree(NodeId v, const TreeLabel& pending,
                    const TreeNeighborhood& nbr_current,
                    std::optional<unsigned> current_version) {
  if (current_version && pending.version <= *current_version) return false;
  if (pending.destination == v) return true;
  if (!pending.parent) return false;
  auto it = nbr_current.find(*pending.parent);
  if (it == nbr_current.end() || !it->second) return false;
  const TreeLabel& parent = *it->second;
  return parent.destination == pending.destination &&
         parent.version == pending.version && parent.depth + 1 == pending.depth;
}

}  // namespace upsim
