#include "upsim/forwarding.hpp"

#include <algorithm>

namespace upsim {

std::string match_key_string(const MatchKey& m) {
  if (const auto* tag = std::get_if<FlowTag>(&m)) return "flow:" + *tag;
  return "dest:" + std::to_string(std::get<NodeId>(m));
}

void ForwardingState::set_rule(NodeId v, const MatchKey& m, NodeId next_hop) {
  if (v >= rules_.size()) throw UnknownNode("node " + std::to_string(v));
  rules_[v][m] = next_hop;
}

void ForwardingState::clear_rule(NodeId v, const MatchKey& m) {
  if (v >= rules_.size()) throw UnknownNode("node " + std::to_string(v));
  rules_[v].erase(m);
}

std::optional<NodeId> ForwardingState::next_hop(NodeId v, const MatchKey& m) const {
  if (v >= rules_.size()) throw UnknownNode("node " + std::to_string(v));
  auto it = rules_[v].find(m);
  if (it == rules_[v].end()) return std::nullopt;
  return it->second;
}

BlackholeVerdict check_blackhole_free(const ForwardingState& s, const Graph& g,
                                      const std::vector<NodeId>& sources,
                                      const MatchKey& m, NodeId dest) {
  for (NodeId src : sources) {
    PacketResult r = trace_packet(s, g, src, m, dest);
    if (std::holds_alternative<PacketDelivered>(r)) continue;
    BlackholeVerdict v;
    v.ok = false;
    if (const auto* d = std::get_if<PacketDropped>(&r)) {
      v.witness = d->at;
      v.kind = BlackholeVerdict::Kind::MissingRule;
    } else {
      v.witness = std::get<PacketLooped>(r).cycle.front();
      v.kind = BlackholeVerdict::Kind::Loop;
    }
    return v;
  }
  return {};
}

LoopVerdict check_loop_free(const ForwardingState& s, const Graph& g,
                            const MatchKey& m) {
  const std::size_t n = g.node_count();
  // 0 = unvisited, 1 = on current walk, 2 = finished.
  std::vector<char> color(n, 0);
  std::vector<NodeId> walk;
  for (NodeId start = 0; start < n; ++start) {
    if (color[start]) continue;
    walk.clear();
    NodeId v = start;
    while (true) {
      if (color[v] == 1) {
        // Found a node of the current walk again: extract the cycle.
        LoopVerdict out;
        out.ok = false;
        auto it = std::find(walk.begin(), walk.end(), v);
        out.cycle.assign(it, walk.end());
        return out;
      }
      if (color[v] == 2) break;
      color[v] = 1;
      walk.push_back(v);
      auto nh = s.next_hop(v, m);
      if (!nh) break;
      v = *nh;
    }
    for (NodeId w : walk) color[w] = 2;
  }
  return {};
}

PacketResult trace_packet(const ForwardingState& s, const Graph& g, NodeId src,
                          const MatchKey& m, NodeId dest,
                          std::size_t max_steps) {
  if (src >= g.node_count()) throw UnknownNode("src " + std::to_string(src));
  if (dest >= g.node_count()) throw UnknownNode("dest " + std::to_string(dest));
  if (max_steps == 0) max_steps = 2 * g.node_count();

  std::vector<NodeId> path{src};
  NodeId v = src;
  for (std::size_t step = 0; step < max_steps; ++step) {
    if (v == dest) return PacketDelivered{path};
    auto nh = s.next_hop(v, m);
    if (!nh) return PacketDropped{v};
    v = *nh;
    auto it = std::find(path.begin(), path.end(), v);
    if (it != path.end() && v != dest)
      return PacketLooped{{it, path.end()}};
    path.push_back(v);
  }
  if (v == dest) return PacketDelivered{path};
  return PacketDropped{v};
}

}  // namespace upsim
