#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "upsim/errors.hpp"

namespace upsim {

// Nodes are dense non-negative integers 0..n-1.
using NodeId = std::uint32_t;

// Undirected link, stored normalized with first < second.
using Link = std::pair<NodeId, NodeId>;

inline Link make_link(NodeId a, NodeId b) {
  return a < b ? Link{a, b} : Link{b, a};
}

/**
 * Immutable undirected network graph plus the node the controller attaches to.
 * Construction validates everything once (see build_graph); afterwards the
 * graph is safe to share between concurrent readers.
 */
class Graph {
 public:
  std::size_t node_count() const { return adj_.size(); }

  // Sorted ascending; throws UnknownNode for out-of-range ids.
  const std::vector<NodeId>& neighbors(NodeId v) const;

  bool adjacent(NodeId u, NodeId v) const;

  // Minimum hop count by breadth-first search. The graph is connected, so a
  // distance always exists.
  unsigned hop_distance(NodeId u, NodeId v) const;

  NodeId controller_site() const { return controller_site_; }

  // Normalized and sorted.
  const std::vector<Link>& links() const { return links_; }

  bool has_link(NodeId u, NodeId v) const { return adjacent(u, v); }

 private:
  friend Graph build_graph(std::size_t, const std::vector<Link>&, NodeId);
  Graph() = default;

  std::vector<std::vector<NodeId>> adj_;
  std::vector<Link> links_;
  NodeId controller_site_ = 0;
};

// Validates and builds a Graph.
//
// Throws UnknownNode for link endpoints or controller_site outside 0..n-1,
// SelfLoop for (v,v) links, DuplicateLink for repeated links in either
// orientation, DisconnectedGraph when the graph is not connected.
Graph build_graph(std::size_t node_count, const std::vector<Link>& links,
                  NodeId controller_site);

}  // namespace upsim
