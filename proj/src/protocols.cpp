#include "upsim/protocols.hpp"

#include <algorithm>
#include <sstream>

#include "upsim/errors.hpp"
#include "upsim/forwarding.hpp"

namespace upsim {

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::NaiveFull: return "NAIVE_FULL";
    case Scheme::PredSucc: return "PRED_SUCC";
    case Scheme::DistFlow: return "DIST_FLOW";
    case Scheme::VersionedTree: return "VERSIONED_TREE";
    case Scheme::CentralBaseline: return "CENTRAL_BASELINE";
  }
  return "?";
}

std::optional<Scheme> scheme_from_name(const std::string& name) {
  if (name == "NAIVE_FULL") return Scheme::NaiveFull;
  if (name == "PRED_SUCC") return Scheme::PredSucc;
  if (name == "DIST_FLOW") return Scheme::DistFlow;
  if (name == "VERSIONED_TREE") return Scheme::VersionedTree;
  if (name == "CENTRAL_BASELINE") return Scheme::CentralBaseline;
  return std::nullopt;
}

const char* message_kind_name(Message::Kind k) {
  switch (k) {
    case Message::Kind::LabelGrant: return "grant";
    case Message::Kind::Announce: return "announce";
    case Message::Kind::Ack: return "ack";
    case Message::Kind::Command: return "command";
    case Message::Kind::Alarm: return "alarm";
  }
  return "?";
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string opt_u32(const std::optional<std::uint32_t>& v) {
  return v ? std::to_string(*v) : std::string("-");
}

std::string opt_node(const std::optional<NodeId>& v) {
  return v ? std::to_string(*v) : std::string("-");
}

std::string label_string(const Label& label) {
  std::ostringstream out;
  if (const auto* f = std::get_if<FlowLabel>(&label)) {
    out << "flow=" << f->flow << " pred=" << opt_node(f->pred)
        << " succ=" << opt_node(f->succ) << " dist=" << f->dist;
  } else {
    const auto& t = std::get<TreeLabel>(label);
    out << "dest=" << t.destination << " parent=" << opt_node(t.parent)
        << " depth=" << t.depth << " ver=" << t.version;
  }
  return out.str();
}

std::optional<NodeId> label_next_hop(const Label& label) {
  if (const auto* f = std::get_if<FlowLabel>(&label)) return f->succ;
  return std::get<TreeLabel>(label).parent;
}

}  // namespace

std::uint64_t Message::payload_hash() const {
  std::ostringstream out;
  out << message_kind_name(kind) << '|' << match_key_string(key) << '|';
  if (label) out << label_string(*label);
  out << '|' << opt_node(rule) << '|' << ordinal << '|' << opt_u32(depends_on)
      << '|' << note;
  return fnv1a(out.str());
}

bool UpdateContext::link_alive(NodeId a, NodeId b) const {
  if (!dead_links) return true;
  return dead_links->find(make_link(a, b)) == dead_links->end();
}

std::vector<NodeId> UpdateContext::alive_neighbors(NodeId v) const {
  std::vector<NodeId> out;
  for (NodeId u : graph->neighbors(v))
    if (link_alive(v, u)) out.push_back(u);
  return out;
}

namespace {

// Mutual pred/succ consistency without distances. The successor side is
// mandatory (that is the reachability half of the certificate); a missing
// predecessor label is vacuously fine, it only means the chain has not grown
// past this node yet.
Verdict verify_pred_succ_local(NodeId v, const FlowLabel& own,
                               const FlowNeighborhood& nbrs) {
  if (!own.succ) return Verdict::ok();  // chain anchor
  auto sit = nbrs.find(*own.succ);
  if (sit == nbrs.end()) return Verdict::no(reason::kSuccNotNeighbor);
  if (!sit->second) return Verdict::no(reason::kSuccNotApplied);
  const FlowLabel& succ = *sit->second;
  if (succ.flow != own.flow) return Verdict::no(reason::kFlowMismatch);
  if (succ.pred != std::optional<NodeId>(v))
    return Verdict::no(reason::kPredSuccMismatch);
  if (own.pred) {
    auto pit = nbrs.find(*own.pred);
    if (pit == nbrs.end()) return Verdict::no(reason::kPredSuccMismatch);
    if (pit->second && pit->second->flow == own.flow &&
        pit->second->succ != std::optional<NodeId>(v))
      return Verdict::no(reason::kPredSuccMismatch);
  }
  return Verdict::ok();
}

FlowNeighborhood flow_neighborhood(const NodeState& node,
                                   const UpdateContext& ctx,
                                   const MatchKey& key) {
  FlowNeighborhood nbrs;
  for (NodeId u : ctx.alive_neighbors(node.id)) {
    auto it = node.neighbor_view.find({u, key});
    if (it != node.neighbor_view.end())
      nbrs[u] = std::get<FlowLabel>(it->second.label);
    else
      nbrs[u] = std::nullopt;
  }
  return nbrs;
}

TreeNeighborhood tree_neighborhood(const NodeState& node,
                                   const UpdateContext& ctx,
                                   const MatchKey& key) {
  TreeNeighborhood nbrs;
  for (NodeId u : ctx.alive_neighbors(node.id)) {
    auto it = node.neighbor_view.find({u, key});
    if (it != node.neighbor_view.end())
      nbrs[u] = std::get<TreeLabel>(it->second.label);
    else
      nbrs[u] = std::nullopt;
  }
  return nbrs;
}

}  // namespace

Verdict verify_local(const NodeState& node, const UpdateContext& ctx,
                     const MatchKey& key) {
  auto it = node.applied.find(key);
  if (it == node.applied.end()) return Verdict::ok();
  const Label& label = it->second.label;
  switch (ctx.scheme) {
    case Scheme::CentralBaseline:
      return Verdict::ok();
    case Scheme::NaiveFull: {
      const auto& f = std::get<FlowLabel>(label);
      if (f.dist == 0 || f.succ) return Verdict::ok();
      return Verdict::no(reason::kNoRuleForDestination);
    }
    case Scheme::PredSucc:
      return verify_pred_succ_local(node.id, std::get<FlowLabel>(label),
                                    flow_neighborhood(node, ctx, key));
    case Scheme::DistFlow:
      return verify_flow_local(node.id, std::get<FlowLabel>(label),
                               flow_neighborhood(node, ctx, key));
    case Scheme::VersionedTree:
      return verify_tree_local(node.id, std::get<TreeLabel>(label),
                               tree_neighborhood(node, ctx, key));
  }
  return Verdict::ok();
}

namespace {

std::optional<std::uint32_t> as_dependency(std::uint32_t ordinal) {
  if (ordinal == 0) return std::nullopt;  // enabled by preinstalled state
  return ordinal;
}

// Gate check for one pending label. On success fills `dep` with the enabling
// application, when there is one.
bool gate_passes(const NodeState& node, const UpdateContext& ctx,
                 const MatchKey& key, const Label& label,
                 std::optional<std::uint32_t>& dep) {
  dep = std::nullopt;
  if (ctx.disable_gate) return true;
  switch (ctx.scheme) {
    case Scheme::CentralBaseline:
      return false;  // commands bypass the pending queue entirely
    case Scheme::NaiveFull:
      return true;
    case Scheme::DistFlow: {
      const auto& f = std::get<FlowLabel>(label);
      if (f.dist == 0) return true;
      if (!f.succ || !ctx.link_alive(node.id, *f.succ)) return false;
      auto it = node.neighbor_view.find({*f.succ, key});
      if (it == node.neighbor_view.end()) return false;
      const auto* sf = std::get_if<FlowLabel>(&it->second.label);
      if (!sf || sf->flow != f.flow || sf->dist + 1 != f.dist) return false;
      dep = as_dependency(it->second.ordinal);
      return true;
    }
    case Scheme::PredSucc: {
      const auto& f = std::get<FlowLabel>(label);
      if (!f.succ) return true;  // destination end of the chain
      if (!ctx.link_alive(node.id, *f.succ)) return false;
      auto sit = node.neighbor_view.find({*f.succ, key});
      if (sit == node.neighbor_view.end()) return false;
      const auto* sf = std::get_if<FlowLabel>(&sit->second.label);
      if (!sf || sf->flow != f.flow) return false;
      std::uint32_t enabler = sit->second.ordinal;
      if (f.pred && *f.pred != ctx.flow_source()) {
        auto pit = node.neighbor_view.find({*f.pred, key});
        if (pit == node.neighbor_view.end()) return false;
        const auto* pf = std::get_if<FlowLabel>(&pit->second.label);
        if (!pf || pf->flow != f.flow) return false;
        enabler = std::max(enabler, pit->second.ordinal);
      }
      dep = as_dependency(enabler);
      return true;
    }
    case Scheme::VersionedTree: {
      const auto& t = std::get<TreeLabel>(label);
      if (node.id == t.destination) return true;
      if (!t.parent || !ctx.link_alive(node.id, *t.parent)) return false;
      auto it = node.neighbor_view.find({*t.parent, key});
      if (it == node.neighbor_view.end()) return false;
      const auto* pt = std::get_if<TreeLabel>(&it->second.label);
      if (!pt || pt->destination != t.destination) return false;
      if (pt->version != t.version || pt->depth + 1 != t.depth) return false;
      dep = as_dependency(it->second.ordinal);
      return true;
    }
  }
  return false;
}

unsigned applied_tree_version(const NodeState& node, const MatchKey& key) {
  auto it = node.applied.find(key);
  if (it == node.applied.end()) return 0;
  if (const auto* t = std::get_if<TreeLabel>(&it->second.label))
    return t->version;
  return 0;
}

void raise_alarm(TransitionResult& r, NodeState& node, const MatchKey& key,
                 const std::string& why) {
  if (!node.alarm) {
    node.alarm = true;
    node.alarm_reason = why;
  }
  Message a;
  a.kind = Message::Kind::Alarm;
  a.sender = node.id;
  a.receiver = kControllerId;
  a.key = key;
  a.note = why;
  r.out.push_back(a);
}

void merge(TransitionResult& into, TransitionResult&& from) {
  for (auto& m : from.out) into.out.push_back(std::move(m));
  for (auto& a : from.applications) into.applications.push_back(std::move(a));
}

}  // namespace

TransitionResult node_try_apply(NodeState& node, const UpdateContext& ctx,
                                std::uint32_t& next_ordinal) {
  TransitionResult r;
  // Drop granted tree versions the node has already moved past.
  std::erase_if(node.pending, [&](const auto& p) {
    const auto* t = std::get_if<TreeLabel>(&p.second);
    return t && t->version <= applied_tree_version(node, p.first);
  });

  for (;;) {
    std::size_t pick = node.pending.size();
    std::optional<std::uint32_t> pick_dep;
    unsigned pick_version = 0;
    for (std::size_t i = 0; i < node.pending.size(); ++i) {
      std::optional<std::uint32_t> dep;
      if (!gate_passes(node, ctx, node.pending[i].first, node.pending[i].second,
                       dep))
        continue;
      // Among applicable tree labels prefer the highest version; skipping
      // versions is allowed and downgrades never are.
      const auto* t = std::get_if<TreeLabel>(&node.pending[i].second);
      unsigned version = t ? t->version : 0;
      if (pick == node.pending.size() || version > pick_version) {
        pick = i;
        pick_dep = dep;
        pick_version = version;
      }
    }
    if (pick == node.pending.size()) break;

    MatchKey key = node.pending[pick].first;
    Label label = node.pending[pick].second;
    node.pending.erase(node.pending.begin() + static_cast<std::ptrdiff_t>(pick));

    Application app;
    app.node = node.id;
    app.key = key;
    app.label = label;
    app.next_hop = label_next_hop(label);
    app.ordinal = next_ordinal++;
    app.depends_on = pick_dep;
    node.applied[key] = AppliedEntry{label, app.ordinal};
    r.applications.push_back(app);

    std::erase_if(node.pending, [&](const auto& p) {
      const auto* t = std::get_if<TreeLabel>(&p.second);
      return t && p.first == key && t->version <= pick_version;
    });

    for (NodeId u : ctx.alive_neighbors(node.id)) {
      Message m;
      m.kind = Message::Kind::Announce;
      m.sender = node.id;
      m.receiver = u;
      m.key = key;
      m.label = label;
      m.ordinal = app.ordinal;
      r.out.push_back(m);
    }

    Verdict v = verify_local(node, ctx, key);
    if (!v.yes) raise_alarm(r, node, key, v.reason);
  }
  return r;
}

TransitionResult node_on_receive(NodeState& node, const Message& msg,
                                 const UpdateContext& ctx,
                                 std::uint32_t& next_ordinal) {
  TransitionResult r;
  switch (msg.kind) {
    case Message::Kind::LabelGrant: {
      if (ctx.scheme == Scheme::CentralBaseline) {
        raise_alarm(r, node, msg.key, "unexpected-grant");
        return r;
      }
      if (!msg.label) {
        raise_alarm(r, node, msg.key, "malformed-grant-missing-label");
        return r;
      }
      if (const auto* f = std::get_if<FlowLabel>(&*msg.label)) {
        const auto* tag = std::get_if<FlowTag>(&msg.key);
        if (!tag || *tag != f->flow) {
          raise_alarm(r, node, msg.key, "malformed-grant-key-mismatch");
          return r;
        }
        if (node.applied.count(msg.key)) return r;  // duplicate grant
        for (const auto& p : node.pending)
          if (p.first == msg.key) return r;
      } else {
        const auto& t = std::get<TreeLabel>(*msg.label);
        const auto* dest = std::get_if<NodeId>(&msg.key);
        if (!dest || *dest != t.destination) {
          raise_alarm(r, node, msg.key, "malformed-grant-key-mismatch");
          return r;
        }
        if (t.version <= applied_tree_version(node, msg.key)) return r;
        for (const auto& p : node.pending) {
          const auto* q = std::get_if<TreeLabel>(&p.second);
          if (q && p.first == msg.key && q->version == t.version) return r;
        }
      }
      node.pending.emplace_back(msg.key, *msg.label);
      merge(r, node_try_apply(node, ctx, next_ordinal));
      return r;
    }
    case Message::Kind::Announce: {
      if (!msg.label) {
        raise_alarm(r, node, msg.key, "malformed-announce-missing-label");
        return r;
      }
      // Announces from one sender can overtake each other in flight. The view
      // tracks the sender's newest application, so ignore anything older than
      // what is already recorded.
      auto seen = node.neighbor_view.find({msg.sender, msg.key});
      if (seen != node.neighbor_view.end() &&
          seen->second.ordinal > msg.ordinal)
        return r;
      node.neighbor_view[{msg.sender, msg.key}] =
          AppliedEntry{*msg.label, msg.ordinal};
      // A neighbor change can invalidate this node's own applied label.
      Verdict v = verify_local(node, ctx, msg.key);
      if (!v.yes) raise_alarm(r, node, msg.key, v.reason);
      merge(r, node_try_apply(node, ctx, next_ordinal));
      return r;
    }
    case Message::Kind::Command: {
      if (ctx.scheme != Scheme::CentralBaseline) {
        raise_alarm(r, node, msg.key, "unexpected-command");
        return r;
      }
      if (!msg.rule) {
        raise_alarm(r, node, msg.key, "malformed-command-missing-rule");
        return r;
      }
      Application app;
      app.node = node.id;
      app.key = msg.key;
      app.label = msg.label;
      app.next_hop = msg.rule;
      app.ordinal = next_ordinal++;
      app.depends_on = msg.depends_on;
      if (msg.label) node.applied[msg.key] = AppliedEntry{*msg.label, app.ordinal};
      r.applications.push_back(app);
      Message ack;
      ack.kind = Message::Kind::Ack;
      ack.sender = node.id;
      ack.receiver = kControllerId;
      ack.key = msg.key;
      ack.ordinal = app.ordinal;
      r.out.push_back(ack);
      return r;
    }
    case Message::Kind::Ack:
    case Message::Kind::Alarm:
      raise_alarm(r, node, msg.key, "unexpected-control-message");
      return r;
  }
  return r;
}

namespace {

Message make_grant(NodeId to, MatchKey key, Label label, SimTime slot) {
  Message m;
  m.kind = Message::Kind::LabelGrant;
  m.sender = kControllerId;
  m.receiver = to;
  m.key = std::move(key);
  m.label = std::move(label);
  m.sent_at = slot;
  return m;
}

// Next hop toward `dest` for every node, following breadth-first distances
// (lowest-id parent on ties).
std::map<NodeId, std::optional<NodeId>> bfs_parents(const Graph& g,
                                                    NodeId dest) {
  std::map<NodeId, std::optional<NodeId>> parent;
  parent[dest] = std::nullopt;
  std::deque<NodeId> queue{dest};
  while (!queue.empty()) {
    NodeId v = queue.front();
    queue.pop_front();
    for (NodeId u : g.neighbors(v)) {
      if (parent.count(u)) continue;
      parent[u] = v;
      queue.push_back(u);
    }
  }
  return parent;
}

}  // namespace

ControllerState controller_plan(
    const UpdateContext& ctx,
    const std::vector<std::map<NodeId, TreeLabel>>& tree_waves,
    const std::map<NodeId, std::optional<NodeId>>* central_old_parents,
    const std::map<NodeId, std::optional<NodeId>>* central_new_parents) {
  ControllerState cs;
  const Graph& g = *ctx.graph;
  SimTime slot = 0;

  switch (ctx.scheme) {
    case Scheme::DistFlow:
    case Scheme::PredSucc: {
      std::map<NodeId, FlowLabel> labels;
      try {
        labels = prove_flow(g, ctx.new_path, ctx.new_tag);
      } catch (const NonAdjacentHop& e) {
        throw InvalidRoute(e.what());
      }
      for (auto it = ctx.new_path.rbegin(); it != ctx.new_path.rend(); ++it)
        cs.initial_sends.push_back(
            make_grant(*it, MatchKey(ctx.new_tag), labels.at(*it), slot++));
      break;
    }
    case Scheme::NaiveFull: {
      std::map<NodeId, FlowLabel> labels;
      try {
        labels = prove_flow(g, ctx.new_path, ctx.new_tag);
      } catch (const NonAdjacentHop& e) {
        throw InvalidRoute(e.what());
      }
      NodeId dest = ctx.flow_destination();
      auto hops = bfs_parents(g, dest);
      for (NodeId v = 0; v < g.node_count(); ++v) {
        if (!labels.count(v)) {
          FlowLabel f;
          f.flow = ctx.new_tag;
          f.succ = hops.at(v);
          f.dist = g.hop_distance(v, dest);
          labels[v] = f;
        }
        cs.initial_sends.push_back(
            make_grant(v, MatchKey(ctx.new_tag), labels.at(v), slot++));
      }
      break;
    }
    case Scheme::VersionedTree: {
      for (const auto& wave : tree_waves) {
        std::vector<NodeId> order;
        for (const auto& [v, label] : wave) {
          if (label.parent && !g.adjacent(v, *label.parent))
            throw InvalidRoute("tree parent is not a neighbor");
          order.push_back(v);
        }
        std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
          const TreeLabel& la = wave.at(a);
          const TreeLabel& lb = wave.at(b);
          if (la.depth != lb.depth) return la.depth < lb.depth;
          return a < b;
        });
        for (NodeId v : order)
          cs.initial_sends.push_back(make_grant(
              v, MatchKey(wave.at(v).destination), wave.at(v), slot++));
      }
      break;
    }
    case Scheme::CentralBaseline: {
      std::vector<Message> commands;
      if (ctx.is_flow()) {
        for (std::size_t i = 0; i + 1 < ctx.new_path.size(); ++i)
          if (!g.adjacent(ctx.new_path[i], ctx.new_path[i + 1]))
            throw InvalidRoute("path hop is not a neighbor");
        // Downstream first; the source's command doubles as the tag switch.
        for (std::size_t i = ctx.new_path.size() - 1; i-- > 0;) {
          Message c;
          c.kind = Message::Kind::Command;
          c.sender = kControllerId;
          c.receiver = ctx.new_path[i];
          c.key = MatchKey(ctx.new_tag);
          c.rule = ctx.new_path[i + 1];
          commands.push_back(c);
        }
      } else {
        NodeId dest = ctx.tree_destination;
        ForwardingState state(g.node_count());
        for (const auto& [v, p] : *central_old_parents)
          if (p) state.set_rule(v, MatchKey(dest), *p);
        std::set<NodeId> remaining;
        for (const auto& [v, p] : *central_new_parents) {
          if (p && !g.adjacent(v, *p))
            throw InvalidRoute("tree parent is not a neighbor");
          auto old = central_old_parents->find(v);
          std::optional<NodeId> before =
              old == central_old_parents->end() ? std::nullopt : old->second;
          if (before != p) remaining.insert(v);
        }
        while (!remaining.empty()) {
          std::optional<NodeId> pick;
          for (NodeId v : remaining) {
            ForwardingState trial = state;
            std::optional<NodeId> p = central_new_parents->at(v);
            if (p)
              trial.set_rule(v, MatchKey(dest), *p);
            else
              trial.clear_rule(v, MatchKey(dest));
            if (check_loop_free(trial, g, MatchKey(dest)).ok) {
              pick = v;
              break;
            }
          }
          if (!pick)
            throw InvalidRoute("no safe command order for the tree update");
          std::optional<NodeId> p = central_new_parents->at(*pick);
          if (p)
            state.set_rule(*pick, MatchKey(dest), *p);
          else
            state.clear_rule(*pick, MatchKey(dest));
          remaining.erase(*pick);
          Message c;
          c.kind = Message::Kind::Command;
          c.sender = kControllerId;
          c.receiver = *pick;
          c.key = MatchKey(dest);
          c.rule = p;
          commands.push_back(c);
        }
      }
      cs.commands_total = commands.size();
      if (!commands.empty()) {
        commands.front().sent_at = 0;
        cs.initial_sends.push_back(commands.front());
        cs.awaiting_ack = true;
        for (std::size_t i = 1; i < commands.size(); ++i)
          cs.command_queue.push_back(commands[i]);
      }
      break;
    }
  }
  return cs;
}

std::vector<Message> controller_on_receive(ControllerState& cs,
                                           const Message& msg,
                                           const UpdateContext&) {
  std::vector<Message> out;
  if (msg.kind == Message::Kind::Ack) {
    cs.acks_received += 1;
    cs.awaiting_ack = false;
    if (!cs.command_queue.empty()) {
      Message c = cs.command_queue.front();
      cs.command_queue.pop_front();
      c.depends_on = msg.ordinal;
      cs.awaiting_ack = true;
      out.push_back(c);
    }
  } else if (msg.kind == Message::Kind::Alarm) {
    cs.alarms.push_back("node " + std::to_string(msg.sender) + ": " + msg.note);
  }
  return out;
}

}  // namespace upsim
