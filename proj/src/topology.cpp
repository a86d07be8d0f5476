#include "upsim/topology.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <string>

namespace upsim {

namespace {

void require_node(std::size_t n, NodeId v, const char* what) {
  if (v >= n)
    throw UnknownNode(std::string(what) + " " + std::to_string(v) +
                      " not in 0.." + std::to_string(n - 1));
}

}  // namespace

Graph build_graph(std::size_t node_count, const std::vector<Link>& links,
                  NodeId controller_site) {
  if (node_count == 0) throw UnknownNode("graph needs at least one node");
  require_node(node_count, controller_site, "controller_site");

  Graph g;
  g.adj_.resize(node_count);
  g.controller_site_ = controller_site;

  std::set<Link> seen;
  for (const auto& [a, b] : links) {
    require_node(node_count, a, "link endpoint");
    require_node(node_count, b, "link endpoint");
    if (a == b) throw SelfLoop("link (" + std::to_string(a) + "," + std::to_string(b) + ")");
    Link l = make_link(a, b);
    if (!seen.insert(l).second)
      throw DuplicateLink("link (" + std::to_string(l.first) + "," +
                          std::to_string(l.second) + ")");
    g.adj_[l.first].push_back(l.second);
    g.adj_[l.second].push_back(l.first);
  }
  g.links_.assign(seen.begin(), seen.end());
  for (auto& nbrs : g.adj_) std::sort(nbrs.begin(), nbrs.end());

  // Connectivity check from node 0.
  std::vector<char> visited(node_count, 0);
  std::queue<NodeId> q;
  q.push(0);
  visited[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    NodeId v = q.front();
    q.pop();
    for (NodeId w : g.adj_[v])
      if (!visited[w]) {
        visited[w] = 1;
        ++reached;
        q.push(w);
      }
  }
  if (reached != node_count)
    throw DisconnectedGraph(std::to_string(reached) + " of " +
                            std::to_string(node_count) + " nodes reachable");
  return g;
}

const std::vector<NodeId>& Graph::neighbors(NodeId v) const {
  if (v >= adj_.size()) throw UnknownNode("node " + std::to_string(v));
  return adj_[v];
}

bool Graph::adjacent(NodeId u, NodeId v) const {
  const auto& nbrs = neighbors(u);
  if (v >= adj_.size()) throw UnknownNode("node " + std::to_string(v));
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

unsigned Graph::hop_distance(NodeId u, NodeId v) const {
  if (u >= adj_.size()) throw UnknownNode("node " + std::to_string(u));
  if (v >= adj_.size()) throw UnknownNode("node " + std::to_string(v));
  if (u == v) return 0;
  std::vector<unsigned> dist(adj_.size(), ~0u);
  std::queue<NodeId> q;
  dist[u] = 0;
  q.push(u);
  while (!q.empty()) {
    NodeId x = q.front();
    q.pop();
    for (NodeId w : adj_[x])
      if (dist[w] == ~0u) {
        dist[w] = dist[x] + 1;
        if (w == v) return dist[w];
        q.push(w);
      }
  }
  // Unreachable: construction guarantees connectivity.
  throw DisconnectedGraph("no path " + std::to_string(u) + " -> " + std::to_string(v));
}

}  // namespace upsim
