#include "upsim/simulator.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "upsim/errors.hpp"
#include "upsim/labeling.hpp"
#include "upsim/metrics.hpp"

namespace upsim {

const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Complete: return "complete";
    case RunStatus::QuiescentIncomplete: return "quiescent_incomplete";
    case RunStatus::SafetyViolation: return "safety_violation";
  }
  return "?";
}

namespace {

json endpoint_json(NodeId id) {
  if (id == kControllerId) return json("ctrl");
  return json(id);
}

json label_json(const Label& label) {
  json j;
  if (const auto* f = std::get_if<FlowLabel>(&label)) {
    j["type"] = "flow";
    j["flow"] = f->flow;
    j["pred"] = f->pred ? json(*f->pred) : json(nullptr);
    j["succ"] = f->succ ? json(*f->succ) : json(nullptr);
    j["dist"] = f->dist;
  } else {
    const auto& t = std::get<TreeLabel>(label);
    j["type"] = "tree";
    j["dest"] = t.destination;
    j["parent"] = t.parent ? json(*t.parent) : json(nullptr);
    j["depth"] = t.depth;
    j["version"] = t.version;
  }
  return j;
}

unsigned tree_version_of(const NodeState& node, const MatchKey& key) {
  auto it = node.applied.find(key);
  if (it == node.applied.end()) return 0;
  if (const auto* t = std::get_if<TreeLabel>(&it->second.label))
    return t->version;
  return 0;
}

// 128-bit state fingerprints used for dedup during enumeration. Application
// ordinals and timestamps are bookkeeping, not behavior, so they are left
// out; two states differing only there evolve identically. Two independent
// 64-bit streams keep the collision odds negligible even across millions of
// states per search.
using Fp = std::pair<std::uint64_t, std::uint64_t>;

struct Mix128 {
  std::uint64_t a = 14695981039346656037ull;
  std::uint64_t b = 0x9E3779B97F4A7C15ull;

  void word(std::uint64_t w) {
    a = (a ^ w) * 1099511628211ull;
    b ^= w + 0x9E3779B97F4A7C15ull + (b << 6) + (b >> 2);
  }
  void i64(std::int64_t v) { word(static_cast<std::uint64_t>(v)); }
  void opt_node(const std::optional<NodeId>& v) {
    i64(v ? static_cast<std::int64_t>(*v) : -1);
  }
  void str(const std::string& s) {
    word(s.size());
    std::uint64_t w = 0;
    int k = 0;
    for (unsigned char c : s) {
      w |= static_cast<std::uint64_t>(c) << (8 * k);
      if (++k == 8) {
        word(w);
        w = 0;
        k = 0;
      }
    }
    if (k) word(w);
  }
  void label(const Label& l) {
    if (const auto* f = std::get_if<FlowLabel>(&l)) {
      word('F');
      str(f->flow);
      opt_node(f->pred);
      opt_node(f->succ);
      word(f->dist);
    } else {
      const auto& t = std::get<TreeLabel>(l);
      word('T');
      word(t.destination);
      opt_node(t.parent);
      word(t.depth);
      word(t.version);
    }
  }
  void key(const MatchKey& k) {
    if (const auto* tag = std::get_if<FlowTag>(&k)) {
      word(0);
      str(*tag);
    } else {
      word(1);
      word(std::get<NodeId>(k));
    }
  }
  Fp done() const { return {a, b}; }
};

// Message identity for branch dedup and the in-flight multiset fingerprint.
Fp message_fp(const Message& m) {
  Mix128 h;
  h.word(static_cast<std::uint64_t>(m.kind));
  h.word(m.sender);
  h.word(m.receiver);
  h.key(m.key);
  h.word(m.label ? 1 : 0);
  if (m.label) h.label(*m.label);
  h.i64(m.rule ? static_cast<std::int64_t>(*m.rule) : -1);
  h.str(m.note);
  return h.done();
}

Fp node_fp(const NodeState& node) {
  Mix128 h;
  h.word(node.id);
  h.word(node.alarm ? 1 : 0);
  h.word(node.applied.size());
  for (const auto& [key, entry] : node.applied) {
    h.key(key);
    h.label(entry.label);
  }
  // Pending order is delivery noise, not state; canonicalize it.
  std::vector<Fp> pend;
  for (const auto& [key, label] : node.pending) {
    Mix128 p;
    p.key(key);
    p.label(label);
    pend.push_back(p.done());
  }
  std::sort(pend.begin(), pend.end());
  h.word(pend.size());
  for (const auto& p : pend) {
    h.word(p.first);
    h.word(p.second);
  }
  h.word(node.neighbor_view.size());
  for (const auto& [from, entry] : node.neighbor_view) {
    h.word(from.first);
    h.key(from.second);
    h.label(entry.label);
  }
  return h.done();
}

Fp row_fp(const ForwardingState& rules, NodeId v) {
  Mix128 h;
  const auto& row = rules.rules_at(v);
  h.word(v);
  h.word(row.size());
  for (const auto& [key, hop] : row) {
    h.key(key);
    h.word(hop);
  }
  return h.done();
}

// The in-flight multiset folds in by sum, so it is order-independent and
// duplicate-aware without sorting on every probe.
Fp fp_add(Fp x, Fp y) { return {x.first + y.first, x.second + y.second}; }
Fp fp_sub(Fp x, Fp y) { return {x.first - y.first, x.second - y.second}; }

struct FpHash {
  std::size_t operator()(const Fp& p) const {
    return p.first ^ (p.second * 0x9E3779B97F4A7C15ull);
  }
};

struct PlannedGrant {
  NodeId node = 0;
  MatchKey key;
  unsigned version = 0;  // 0 for flow grants
};

/**
 * Protocol state shared by the timed run and the interleaving enumerator:
 * node states, installed rules, the controller, dead links, and the safety
 * monitor. Time handling lives in the callers.
 */
struct SimCore {
  const SimConfig* cfg = nullptr;
  const Graph* g = nullptr;
  std::vector<NodeState> nodes;
  ForwardingState rules{0};
  ControllerState ctrl;
  std::set<Link> dead;
  UpdateContext ctx;
  std::uint32_t next_ordinal = 1;
  bool activated = false;
  std::vector<Application> apps;
  std::vector<PlannedGrant> planned;
  std::set<std::string> seen_violations;
  std::vector<Violation> violations;
  std::map<NodeId, unsigned> version_floor;

  // After copying (the enumerator forks states), the context must point at
  // this instance's dead-link set again.
  void rebind() { ctx.dead_links = &dead; }

  void init(const SimConfig& c, const Graph& graph) {
    cfg = &c;
    g = &graph;
    nodes.resize(g->node_count());
    for (NodeId v = 0; v < g->node_count(); ++v) nodes[v].id = v;
    rules = ForwardingState(g->node_count());

    ctx.scheme = cfg->scheme;
    ctx.graph = g;
    ctx.disable_gate = cfg->disable_gate;
    ctx.old_tag = cfg->old_tag;
    ctx.new_tag = cfg->new_tag;
    ctx.old_path = cfg->old_path;
    ctx.new_path = cfg->new_path;
    ctx.tree_destination = cfg->tree_destination;
    for (unsigned v : cfg->grant_versions)
      ctx.target_version = std::max(ctx.target_version, v);
    ctx.dead_links = &dead;

    std::vector<std::map<NodeId, TreeLabel>> waves;
    const std::map<NodeId, std::optional<NodeId>>* old_parents = nullptr;
    const std::map<NodeId, std::optional<NodeId>>* new_parents = nullptr;

    if (cfg->is_flow()) {
      if (!cfg->old_path.empty()) {
        auto old_labels = prove_flow(*g, cfg->old_path, cfg->old_tag);
        MatchKey key{cfg->old_tag};
        for (const auto& [v, label] : old_labels) {
          nodes[v].applied[key] = AppliedEntry{Label(label), 0};
          if (label.succ) rules.set_rule(v, key, *label.succ);
        }
        for (const auto& [v, label] : old_labels)
          for (NodeId u : g->neighbors(v))
            if (old_labels.count(u))
              nodes[v].neighbor_view[{u, key}] =
                  AppliedEntry{Label(old_labels.at(u)), 0};
      }
    } else if (!cfg->trees.empty()) {
      MatchKey key{cfg->tree_destination};
      std::map<unsigned, std::map<NodeId, TreeLabel>> tree_labels;
      for (const auto& [version, parents] : cfg->trees)
        tree_labels[version] =
            prove_tree(*g, parents, cfg->tree_destination, version);
      for (const auto& [v, version] : cfg->initial_assignment) {
        const TreeLabel& label = tree_labels.at(version).at(v);
        nodes[v].applied[key] = AppliedEntry{Label(label), 0};
        if (label.parent) rules.set_rule(v, key, *label.parent);
      }
      for (const auto& [v, version] : cfg->initial_assignment)
        for (NodeId u : g->neighbors(v)) {
          auto it = cfg->initial_assignment.find(u);
          if (it == cfg->initial_assignment.end()) continue;
          nodes[v].neighbor_view[{u, key}] =
              AppliedEntry{Label(tree_labels.at(it->second).at(u)), 0};
        }
      for (unsigned version : cfg->grant_versions)
        waves.push_back(tree_labels.at(version));
      if (cfg->scheme == Scheme::CentralBaseline && cfg->trees.size() >= 2) {
        old_parents = &cfg->trees.begin()->second;
        new_parents = &cfg->trees.rbegin()->second;
      }
    }

    ctrl = controller_plan(ctx, waves, old_parents, new_parents);
    for (const auto& m : ctrl.initial_sends) {
      if (m.kind != Message::Kind::LabelGrant) continue;
      PlannedGrant p;
      p.node = m.receiver;
      p.key = m.key;
      if (m.label)
        if (const auto* t = std::get_if<TreeLabel>(&*m.label))
          p.version = t->version;
      planned.push_back(p);
    }
  }

  TransitionResult deliver(const Message& m, SimTime now) {
    if (m.receiver == kControllerId) {
      TransitionResult r;
      r.out = controller_on_receive(ctrl, m, ctx);
      return r;
    }
    TransitionResult r = node_on_receive(nodes[m.receiver], m, ctx, next_ordinal);
    for (auto& app : r.applications) {
      app.at = now;
      commit(app);
      apps.push_back(app);
    }
    return r;
  }

  void commit(Application& app) {
    auto prev = rules.next_hop(app.node, app.key);
    if (app.next_hop) {
      rules.set_rule(app.node, app.key, *app.next_hop);
      app.rule_changed = prev != app.next_hop;
    }
    if (cfg->is_flow() && !activated && app.node == ctx.flow_source() &&
        app.key == MatchKey(cfg->new_tag)) {
      activated = true;
      // Switching the source retires the old route; its rules are garbage
      // collected administratively, without messages.
      if (!cfg->old_tag.empty())
        for (NodeId v = 0; v < g->node_count(); ++v)
          rules.clear_rule(v, MatchKey(cfg->old_tag));
    }
  }

  void add_violation(SimTime at, const std::string& kind,
                     const std::string& detail) {
    if (!seen_violations.insert(kind + "|" + detail).second) return;
    violations.push_back(Violation{at, kind, detail});
  }

  void monitor(SimTime at) {
    std::vector<MatchKey> keys;
    if (cfg->is_flow()) {
      if (!cfg->old_tag.empty()) keys.emplace_back(cfg->old_tag);
      keys.emplace_back(cfg->new_tag);
    } else if (!cfg->trees.empty()) {
      keys.emplace_back(cfg->tree_destination);
    }
    for (const auto& key : keys) {
      auto lv = check_loop_free(rules, *g, key);
      if (!lv.ok) {
        std::ostringstream out;
        out << "key " << match_key_string(key) << " cycle";
        for (NodeId v : lv.cycle) out << ' ' << v;
        add_violation(at, "loop", out.str());
      }
    }
    if (!cfg->trees.empty()) {
      MatchKey key{cfg->tree_destination};
      for (const auto& node : nodes) {
        unsigned cur = tree_version_of(node, key);
        auto [it, fresh] = version_floor.try_emplace(node.id, cur);
        if (!fresh && cur < it->second) {
          std::ostringstream out;
          out << "node " << node.id << " moved from version " << it->second
              << " to " << cur;
          add_violation(at, "version_downgrade", out.str());
        }
        it->second = std::max(it->second, cur);
      }
    }
    if (!dead.empty()) return;  // fault runs judge delivery via end traces
    if (cfg->is_flow()) {
      MatchKey active = activated ? MatchKey(cfg->new_tag) : MatchKey(cfg->old_tag);
      bool have_route = activated || !cfg->old_path.empty();
      if (have_route) {
        NodeId source = cfg->new_path.front();
        NodeId dest = cfg->new_path.back();
        auto bv = check_blackhole_free(rules, *g, {source}, active, dest);
        if (!bv.ok) {
          std::ostringstream out;
          out << "key " << match_key_string(active) << " from " << source;
          if (bv.witness) out << " stops at " << *bv.witness;
          add_violation(at, "blackhole", out.str());
        }
      }
    } else if (!cfg->trees.empty()) {
      std::vector<NodeId> sources;
      for (NodeId v = 0; v < g->node_count(); ++v)
        if (v != cfg->tree_destination) sources.push_back(v);
      MatchKey key{cfg->tree_destination};
      auto bv = check_blackhole_free(rules, *g, sources, key,
                                     cfg->tree_destination);
      if (!bv.ok) {
        std::ostringstream out;
        out << "destination " << cfg->tree_destination;
        if (bv.witness) out << " unreachable, stops at " << *bv.witness;
        add_violation(at, "blackhole", out.str());
      }
    }
  }

  bool complete() const {
    if (cfg->scheme == Scheme::CentralBaseline)
      return ctrl.acks_received == ctrl.commands_total;
    for (const auto& p : planned) {
      if (p.version == 0) {
        if (!nodes[p.node].applied.count(p.key)) return false;
      } else if (tree_version_of(nodes[p.node], p.key) < p.version) {
        return false;
      }
    }
    return true;
  }

};

struct QueuedEvent {
  SimTime at = 0;
  int phase = 1;  // link failures apply before deliveries at the same time
  NodeId sender = 0;
  NodeId receiver = 0;
  std::uint64_t hash = 0;
  std::uint64_t seq = 0;
  Message msg;
  Link link{0, 0};
  bool lost = false;

  bool operator<(const QueuedEvent& o) const {
    if (at != o.at) return at < o.at;
    if (phase != o.phase) return phase < o.phase;
    if (sender != o.sender) return sender < o.sender;
    if (receiver != o.receiver) return receiver < o.receiver;
    if (hash != o.hash) return hash < o.hash;
    return seq < o.seq;
  }
};

}  // namespace

RunResult run_simulation(const SimConfig& cfg) {
  Graph g = build_graph(cfg.node_count, cfg.links, cfg.controller_site);
  SimCore core;
  core.init(cfg, g);

  RunResult res;
  json setup;
  setup["event"] = "setup";
  setup["scheme"] = scheme_name(cfg.scheme);
  setup["nodes"] = cfg.node_count;
  setup["grants"] = core.planned.size();
  setup["commands"] = core.ctrl.commands_total;
  setup["policy"] =
      cfg.policy.kind == DeliveryPolicy::Kind::Fifo ? "fifo" : "jitter";
  if (cfg.policy.kind == DeliveryPolicy::Kind::SeededRandomJitter) {
    setup["seed"] = cfg.policy.seed;
    setup["max_extra_delay"] = cfg.policy.max_extra_delay;
  }
  res.trace.push_back(setup);

  std::mt19937_64 rng(cfg.policy.seed);
  std::uniform_int_distribution<SimTime> extra(
      0, std::max<SimTime>(0, cfg.policy.max_extra_delay));
  auto jitter = [&]() -> SimTime {
    if (cfg.policy.kind != DeliveryPolicy::Kind::SeededRandomJitter) return 0;
    return extra(rng);
  };
  auto site_of = [&](NodeId v) {
    return v == kControllerId ? g.controller_site() : v;
  };

  std::set<QueuedEvent> queue;
  std::uint64_t seq = 0;

  auto is_lost = [&](const Message& m) {
    if (m.kind != Message::Kind::LabelGrant || !m.label) return false;
    const auto* t = std::get_if<TreeLabel>(&*m.label);
    if (!t) return false;
    for (const auto& lg : cfg.lost_grants)
      if (lg.version == t->version && lg.node == m.receiver) return true;
    return false;
  };

  auto enqueue = [&](Message m) {
    m.deliver_at = m.sent_at + g.hop_distance(site_of(m.sender), site_of(m.receiver)) + jitter();
    QueuedEvent ev;
    ev.at = m.deliver_at;
    ev.phase = 1;
    ev.sender = m.sender;
    ev.receiver = m.receiver;
    ev.hash = m.payload_hash();
    ev.seq = seq++;
    ev.lost = is_lost(m);
    ev.msg = m;
    res.messages_sent += 1;
    json row;
    row["t"] = m.sent_at;
    row["event"] = "send";
    row["kind"] = message_kind_name(m.kind);
    row["from"] = endpoint_json(m.sender);
    row["to"] = endpoint_json(m.receiver);
    row["key"] = match_key_string(m.key);
    row["deliver_at"] = m.deliver_at;
    if (m.label) row["label"] = label_json(*m.label);
    if (m.rule) row["rule"] = *m.rule;
    if (ev.lost) row["lost"] = true;
    res.trace.push_back(row);
    queue.insert(std::move(ev));
  };

  for (const auto& m : core.ctrl.initial_sends) enqueue(m);
  for (const auto& lf : cfg.link_failures) {
    QueuedEvent ev;
    ev.at = lf.at;
    ev.phase = 0;
    ev.seq = seq++;
    ev.link = lf.link;
    queue.insert(ev);
  }

  std::size_t traced_violations = 0;
  auto flush_violations = [&]() {
    for (; traced_violations < core.violations.size(); ++traced_violations) {
      const auto& v = core.violations[traced_violations];
      json row;
      row["t"] = v.at;
      row["event"] = "violation";
      row["kind"] = v.kind;
      row["detail"] = v.detail;
      res.trace.push_back(row);
    }
  };

  core.monitor(0);
  flush_violations();

  unsigned events_seen = 0;
  bool was_activated = false;
  std::size_t event_guard = 0;
  SimTime last_time = 0;
  while (!queue.empty()) {
    if (++event_guard > 5000000)
      throw Error("event limit exceeded; simulation is not quiescing");
    QueuedEvent ev = *queue.begin();
    queue.erase(queue.begin());
    last_time = ev.at;

    if (ev.phase == 0) {
      core.dead.insert(ev.link);
      std::size_t dropped = 0;
      for (auto it = queue.begin(); it != queue.end();) {
        const Message& m = it->msg;
        bool crossing = it->phase == 1 && m.kind == Message::Kind::Announce &&
                        m.sender != kControllerId &&
                        m.receiver != kControllerId &&
                        make_link(m.sender, m.receiver) == ev.link;
        if (crossing) {
          it = queue.erase(it);
          ++dropped;
        } else {
          ++it;
        }
      }
      json row;
      row["t"] = ev.at;
      row["event"] = "link_fail";
      row["link"] = json::array({ev.link.first, ev.link.second});
      row["dropped"] = dropped;
      res.trace.push_back(row);

      for (NodeId v : {ev.link.first, ev.link.second}) {
        NodeState& node = core.nodes[v];
        if (node.alarm) continue;
        for (const auto& [key, entry] : node.applied) {
          Verdict verdict = verify_local(node, core.ctx, key);
          if (verdict.yes) continue;
          node.alarm = true;
          node.alarm_reason = verdict.reason;
          json arow;
          arow["t"] = ev.at;
          arow["event"] = "alarm";
          arow["node"] = v;
          arow["reason"] = verdict.reason;
          res.trace.push_back(arow);
          Message alarm;
          alarm.kind = Message::Kind::Alarm;
          alarm.sender = v;
          alarm.receiver = kControllerId;
          alarm.key = key;
          alarm.note = verdict.reason;
          alarm.sent_at = ev.at;
          enqueue(alarm);
          break;  // one alarm per node is enough to flag it
        }
      }
    } else {
      if (ev.lost) {
        json row;
        row["t"] = ev.at;
        row["event"] = "lost";
        row["kind"] = message_kind_name(ev.msg.kind);
        row["to"] = endpoint_json(ev.msg.receiver);
        row["key"] = match_key_string(ev.msg.key);
        res.trace.push_back(row);
        continue;
      }
      json row;
      row["t"] = ev.at;
      row["event"] = "deliver";
      row["kind"] = message_kind_name(ev.msg.kind);
      row["from"] = endpoint_json(ev.msg.sender);
      row["to"] = endpoint_json(ev.msg.receiver);
      row["key"] = match_key_string(ev.msg.key);
      res.trace.push_back(row);

      std::size_t apps_before = core.apps.size();
      TransitionResult out = core.deliver(ev.msg, ev.at);
      for (std::size_t i = apps_before; i < core.apps.size(); ++i) {
        const Application& app = core.apps[i];
        json arow;
        arow["t"] = app.at;
        arow["event"] = "apply";
        arow["node"] = app.node;
        arow["key"] = match_key_string(app.key);
        arow["ordinal"] = app.ordinal;
        arow["depends_on"] =
            app.depends_on ? json(*app.depends_on) : json(nullptr);
        arow["next_hop"] = app.next_hop ? json(*app.next_hop) : json(nullptr);
        arow["rule_changed"] = app.rule_changed;
        if (app.label) arow["label"] = label_json(*app.label);
        res.trace.push_back(arow);
      }
      if (core.activated && !was_activated) {
        was_activated = true;
        if (!cfg.old_tag.empty()) {
          json grow;
          grow["t"] = ev.at;
          grow["event"] = "gc";
          grow["key"] = cfg.old_tag;
          res.trace.push_back(grow);
        }
      }
      for (auto& m : out.out) {
        if (m.kind == Message::Kind::Alarm) {
          json arow;
          arow["t"] = ev.at;
          arow["event"] = "alarm";
          arow["node"] = m.sender;
          arow["reason"] = m.note;
          res.trace.push_back(arow);
        }
        m.sent_at = ev.at;
        enqueue(m);
      }
    }

    if (++events_seen % std::max(1u, cfg.probe_every) == 0) {
      core.monitor(ev.at);
      flush_violations();
    }
  }

  core.monitor(last_time);
  flush_violations();

  if (!core.dead.empty() && !cfg.trees.empty()) {
    std::vector<NodeId> sources = cfg.trace_sources;
    if (sources.empty())
      for (NodeId v = 0; v < g.node_count(); ++v)
        if (v != cfg.tree_destination) sources.push_back(v);
    MatchKey key{cfg.tree_destination};
    for (NodeId s : sources) {
      EndTrace et;
      et.source = s;
      et.result = trace_packet_with_fallback(core.rules, g, core.nodes, s, key,
                                             cfg.tree_destination, core.dead);
      json row;
      row["event"] = "packet_trace";
      row["source"] = s;
      if (const auto* d = std::get_if<PacketDelivered>(&et.result)) {
        row["outcome"] = "delivered";
        row["path"] = d->path;
      } else if (const auto* p = std::get_if<PacketDropped>(&et.result)) {
        row["outcome"] = "dropped";
        row["at"] = p->at;
      } else {
        row["outcome"] = "looped";
        row["cycle"] = std::get<PacketLooped>(et.result).cycle;
      }
      res.trace.push_back(row);
      res.end_traces.push_back(std::move(et));
    }
  }

  res.violations = core.violations;
  res.applications = core.apps;
  res.controller_alarms = core.ctrl.alarms;
  res.final_rules = core.rules;
  res.final_nodes = core.nodes;
  for (const auto& n : core.nodes)
    if (n.alarm) res.alarm_count += 1;
  res.completion_time = 0;
  for (const auto& a : core.apps)
    res.completion_time = std::max(res.completion_time, a.at);
  res.rounds = sequential_rounds(core.apps);
  if (!core.violations.empty())
    res.status = RunStatus::SafetyViolation;
  else if (core.complete())
    res.status = RunStatus::Complete;
  else
    res.status = RunStatus::QuiescentIncomplete;

  json summary;
  summary["event"] = "summary";
  summary["status"] = run_status_name(res.status);
  summary["completion_time"] = res.completion_time;
  summary["messages"] = res.messages_sent;
  summary["alarms"] = res.alarm_count;
  summary["violations"] = res.violations.size();
  summary["applications"] = res.applications.size();
  summary["rounds"] = res.rounds;
  res.trace.push_back(summary);
  return res;
}

std::string trace_text(const RunResult& r) {
  std::string out;
  for (const auto& row : r.trace) {
    out += row.dump();
    out += '\n';
  }
  return out;
}

SimConfig inject_link_failure(const SimConfig& cfg, Link link, SimTime at) {
  Link norm = make_link(link.first, link.second);
  bool known = false;
  for (const auto& l : cfg.links)
    if (make_link(l.first, l.second) == norm) known = true;
  if (!known) {
    std::ostringstream out;
    out << "no link (" << link.first << ", " << link.second << ") to fail";
    throw UnknownLink(out.str());
  }
  SimConfig next = cfg;
  next.link_failures.push_back(LinkFailure{norm, at});
  return next;
}

PacketResult trace_packet_with_fallback(const ForwardingState& rules,
                                        const Graph& g,
                                        const std::vector<NodeState>& nodes,
                                        NodeId source, const MatchKey& key,
                                        NodeId dest,
                                        const std::set<Link>& dead_links) {
  auto alive = [&](NodeId a, NodeId b) {
    return dead_links.find(make_link(a, b)) == dead_links.end();
  };
  auto depth_version = [&](NodeId v) -> std::optional<std::pair<long, long>> {
    auto it = nodes[v].applied.find(key);
    if (it == nodes[v].applied.end()) return std::nullopt;
    if (const auto* t = std::get_if<TreeLabel>(&it->second.label))
      return std::make_pair<long, long>(t->depth, t->version);
    const auto& f = std::get<FlowLabel>(it->second.label);
    return std::make_pair<long, long>(f.dist, 0);
  };

  std::vector<NodeId> path;
  std::map<NodeId, std::size_t> seen;
  NodeId v = source;
  std::size_t budget = 2 * g.node_count() + 2;
  for (std::size_t step = 0; step <= budget; ++step) {
    path.push_back(v);
    if (v == dest) return PacketDelivered{path};
    auto prior = seen.find(v);
    if (prior != seen.end())
      return PacketLooped{{path.begin() + static_cast<std::ptrdiff_t>(prior->second),
                           path.end() - 1}};
    seen[v] = path.size() - 1;

    std::optional<NodeId> next;
    auto primary = rules.next_hop(v, key);
    if (primary && alive(v, *primary)) {
      next = primary;
    } else {
      auto own = depth_version(v);
      long own_depth = own ? own->first : std::numeric_limits<long>::max();
      long own_version = own ? own->second : 0;
      std::optional<std::tuple<long, long, NodeId>> best;
      for (NodeId u : g.neighbors(v)) {
        if (!alive(v, u)) continue;
        auto dv = depth_version(u);
        if (!dv) continue;
        if (!(dv->first < own_depth || dv->second > own_version)) continue;
        std::tuple<long, long, NodeId> cand{dv->first, -dv->second, u};
        if (!best || cand < *best) best = cand;
      }
      if (best) next = std::get<2>(*best);
    }
    if (!next) return PacketDropped{v};
    v = *next;
  }
  return PacketDropped{v};
}

EnumStats enumerate_interleavings(
    const SimConfig& cfg, const EnumOptions& opt,
    const std::function<void(const EnumLeaf&)>& sink) {
  Graph g = build_graph(cfg.node_count, cfg.links, cfg.controller_site);
  SimCore core;
  core.init(cfg, g);

  EnumStats stats;
  std::unordered_set<Fp, FpHash> visited;
  if (opt.dedup) visited.reserve(1 << 12);

  std::vector<Message> inflight(core.ctrl.initial_sends.begin(),
                                core.ctrl.initial_sends.end());

  // Fingerprint pieces held alongside the search and patched per delivery:
  // one per node, one per forwarding row, and an order-independent sum over
  // the in-flight multiset.
  std::vector<Fp> nodes_fp(g.node_count()), rows_fp(g.node_count());
  for (NodeId v = 0; v < g.node_count(); ++v) {
    nodes_fp[v] = node_fp(core.nodes[v]);
    rows_fp[v] = row_fp(core.rules, v);
  }
  Fp inflight_fp{0, 0};
  for (const auto& m : inflight)
    inflight_fp = fp_add(inflight_fp, message_fp(m));

  auto fold = [&]() {
    Mix128 h;
    for (const auto& f : nodes_fp) {
      h.word(f.first);
      h.word(f.second);
    }
    for (const auto& f : rows_fp) {
      h.word(f.first);
      h.word(f.second);
    }
    h.word(core.ctrl.acks_received);
    h.word(core.ctrl.command_queue.size());
    h.word(core.activated ? 1 : 0);
    h.word(inflight_fp.first);
    h.word(inflight_fp.second);
    return h.done();
  };

  auto count_leaf = [&]() {
    stats.interleavings += 1;
    EnumLeaf leaf;
    leaf.complete = core.complete();
    leaf.violation = !core.violations.empty();
    for (const auto& nd : core.nodes)
      if (nd.alarm) leaf.alarms += 1;
    if (leaf.violation)
      stats.violating += 1;
    else if (leaf.complete)
      stats.complete += 1;
    else
      stats.incomplete += 1;
    if (sink) sink(leaf);
  };

  // Depth-first over delivery choices on one shared state, undoing each
  // delivery on the way back out. A delivery touches the receiver, its
  // forwarding row (every row when the flow source activates and the old
  // route is collected), the controller, and the run counters, so snapshots
  // stay proportional to that footprint instead of the whole network. The
  // monitor runs once per distinct state; its verdict depends only on the
  // state, not on the path that reached it.
  std::function<void()> explore = [&]() {
    if (inflight.empty()) {
      count_leaf();
      return;
    }
    std::set<Fp> tried;
    for (std::size_t i = 0; i < inflight.size(); ++i) {
      const Fp mfp = message_fp(inflight[i]);
      if (!tried.insert(mfp).second) continue;
      if (++stats.transitions > opt.cap)
        throw ExplosionGuard("interleaving budget of " +
                             std::to_string(opt.cap) +
                             " transitions exhausted");

      Message msg = std::move(inflight[i]);
      inflight.erase(inflight.begin() + i);
      inflight_fp = fp_sub(inflight_fp, mfp);

      const bool to_ctrl = msg.receiver == kControllerId;
      const NodeId r = to_ctrl ? 0 : msg.receiver;
      const bool may_sweep = !to_ctrl && core.cfg->is_flow() &&
                             !core.activated && r == core.ctx.flow_source();

      std::optional<ControllerState> saved_ctrl;
      std::optional<NodeState> saved_node;
      std::map<MatchKey, NodeId> saved_row;
      std::optional<ForwardingState> saved_rules;
      std::vector<Fp> saved_rows_fp;
      Fp saved_node_fp{}, saved_row_fp{};
      const std::uint32_t saved_ordinal = core.next_ordinal;
      const std::size_t saved_apps = core.apps.size();
      const bool saved_activated = core.activated;

      if (to_ctrl) {
        saved_ctrl = core.ctrl;
      } else {
        saved_node = core.nodes[r];
        saved_node_fp = nodes_fp[r];
        if (may_sweep) {
          saved_rules = core.rules;
          saved_rows_fp = rows_fp;
        } else {
          saved_row = core.rules.rules_at(r);
          saved_row_fp = rows_fp[r];
        }
      }

      TransitionResult out = core.deliver(msg, 0);
      std::vector<Fp> out_fps;
      out_fps.reserve(out.out.size());
      for (auto& m : out.out) {
        out_fps.push_back(message_fp(m));
        inflight_fp = fp_add(inflight_fp, out_fps.back());
        inflight.push_back(std::move(m));
      }
      if (!to_ctrl) {
        nodes_fp[r] = node_fp(core.nodes[r]);
        if (core.activated != saved_activated)
          for (NodeId v = 0; v < g.node_count(); ++v)
            rows_fp[v] = row_fp(core.rules, v);
        else
          rows_fp[r] = row_fp(core.rules, r);
      }

      bool fresh = true;
      if (opt.dedup) {
        fresh = visited.insert(fold()).second;
        stats.distinct_states = visited.size();
      }
      if (fresh) {
        const std::size_t saved_viol = core.violations.size();
        auto saved_seen = core.seen_violations;
        auto saved_floor = core.version_floor;
        core.monitor(0);
        if (!core.violations.empty()) stats.any_violation = true;
        explore();
        core.violations.resize(saved_viol);
        core.seen_violations = std::move(saved_seen);
        core.version_floor = std::move(saved_floor);
      }

      for (std::size_t k = 0; k < out_fps.size(); ++k)
        inflight_fp = fp_sub(inflight_fp, out_fps[k]);
      inflight.resize(inflight.size() - out_fps.size());
      if (to_ctrl) {
        core.ctrl = std::move(*saved_ctrl);
      } else {
        core.nodes[r] = std::move(*saved_node);
        nodes_fp[r] = saved_node_fp;
        if (saved_rules) {
          core.rules = std::move(*saved_rules);
          rows_fp = std::move(saved_rows_fp);
        } else {
          const auto current_row = core.rules.rules_at(r);
          for (const auto& [key, hop] : current_row) core.rules.clear_rule(r, key);
          for (const auto& [key, hop] : saved_row) core.rules.set_rule(r, key, hop);
          rows_fp[r] = saved_row_fp;
        }
      }
      core.next_ordinal = saved_ordinal;
      core.apps.resize(saved_apps);
      core.activated = saved_activated;
      inflight_fp = fp_add(inflight_fp, mfp);
      inflight.insert(inflight.begin() + i, std::move(msg));
    }
  };

  core.monitor(0);
  if (!core.violations.empty()) stats.any_violation = true;
  if (opt.dedup) {
    visited.insert(fold());
    stats.distinct_states = visited.size();
  }
  explore();
  return stats;
}

}  // namespace upsim
