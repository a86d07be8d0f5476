#include "upsim/scenario.hpp"

#include <algorithm>
#include <fstream>

#include "upsim/errors.hpp"
#include "upsim/labeling.hpp"

namespace upsim {

namespace {

const json& field(const json& j, const std::string& name,
                  const std::string& where) {
  auto it = j.find(name);
  if (it == j.end()) throw SchemaError(where + "." + name + " is required");
  return *it;
}

std::uint64_t as_uint(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw SchemaError(where + " must be a non-negative integer");
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw SchemaError(where + " must be a string");
  return j.get<std::string>();
}

const json& as_array(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + " must be an array");
  return j;
}

const json& as_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + " must be an object");
  return j;
}

NodeId as_node(const json& j, const std::string& where, std::size_t n) {
  std::uint64_t v = as_uint(j, where);
  if (v >= n)
    throw SemanticError(where + ": node " + std::to_string(v) +
                        " is out of range for " + std::to_string(n) + " nodes");
  return static_cast<NodeId>(v);
}

std::vector<NodeId> as_path(const json& j, const std::string& where,
                            std::size_t n) {
  std::vector<NodeId> out;
  for (const auto& e : as_array(j, where)) out.push_back(as_node(e, where, n));
  return out;
}

void parse_policy(const json& j, DeliveryPolicy& policy) {
  as_object(j, "policy");
  std::string kind = as_string(field(j, "kind", "policy"), "policy.kind");
  if (kind == "fifo") {
    policy.kind = DeliveryPolicy::Kind::Fifo;
  } else if (kind == "jitter") {
    policy.kind = DeliveryPolicy::Kind::SeededRandomJitter;
    policy.seed = as_uint(field(j, "seed", "policy"), "policy.seed");
    policy.max_extra_delay = static_cast<SimTime>(as_uint(
        field(j, "max_extra_delay", "policy"), "policy.max_extra_delay"));
  } else {
    throw SemanticError("policy.kind must be fifo or jitter");
  }
}

void parse_update(const json& j, SimConfig& cfg) {
  as_object(j, "update");
  std::string kind = as_string(field(j, "kind", "update"), "update.kind");
  std::size_t n = cfg.node_count;
  if (kind == "flow") {
    cfg.new_tag = as_string(field(j, "new_tag", "update"), "update.new_tag");
    if (cfg.new_tag.empty())
      throw SemanticError("update.new_tag must not be empty");
    cfg.new_path = as_path(field(j, "new_path", "update"), "update.new_path", n);
    if (cfg.new_path.size() < 2)
      throw SemanticError("update.new_path needs at least two nodes");
    if (j.contains("old_tag"))
      cfg.old_tag = as_string(j["old_tag"], "update.old_tag");
    if (j.contains("old_path"))
      cfg.old_path = as_path(j["old_path"], "update.old_path", n);
    if (cfg.old_path.empty() != cfg.old_tag.empty())
      throw SemanticError("update.old_tag and update.old_path go together");
  } else if (kind == "tree") {
    cfg.tree_destination =
        as_node(field(j, "destination", "update"), "update.destination", n);
    for (const auto& tree : as_array(field(j, "trees", "update"), "update.trees")) {
      as_object(tree, "update.trees[]");
      unsigned version = static_cast<unsigned>(
          as_uint(field(tree, "version", "update.trees[]"), "tree version"));
      if (version == 0) throw SemanticError("tree versions start at 1");
      if (cfg.trees.count(version))
        throw SemanticError("duplicate tree version " + std::to_string(version));
      const json& parents =
          as_array(field(tree, "parents", "update.trees[]"), "tree parents");
      if (parents.size() != n)
        throw SemanticError("tree parents must list one entry per node");
      std::map<NodeId, std::optional<NodeId>> p;
      for (std::size_t v = 0; v < n; ++v) {
        if (parents[v].is_null())
          p[static_cast<NodeId>(v)] = std::nullopt;
        else
          p[static_cast<NodeId>(v)] =
              as_node(parents[v], "tree parent", n);
      }
      cfg.trees[version] = std::move(p);
    }
    if (cfg.trees.empty()) throw SemanticError("update.trees must not be empty");
    if (j.contains("initial_assignment")) {
      for (const auto& [key, value] :
           as_object(j["initial_assignment"], "update.initial_assignment").items()) {
        NodeId v;
        try {
          v = static_cast<NodeId>(std::stoul(key));
        } catch (...) {
          throw SchemaError("initial_assignment keys must be node ids");
        }
        if (v >= n)
          throw SemanticError("initial_assignment node " + key +
                              " is out of range");
        cfg.initial_assignment[v] = static_cast<unsigned>(
            as_uint(value, "initial_assignment version"));
      }
    } else {
      unsigned lowest = cfg.trees.begin()->first;
      for (std::size_t v = 0; v < n; ++v)
        cfg.initial_assignment[static_cast<NodeId>(v)] = lowest;
    }
    if (j.contains("grant_versions"))
      for (const auto& e : as_array(j["grant_versions"], "update.grant_versions"))
        cfg.grant_versions.push_back(
            static_cast<unsigned>(as_uint(e, "grant version")));
    else if (cfg.scheme != Scheme::CentralBaseline) {
      unsigned lowest = cfg.trees.begin()->first;
      for (const auto& [version, tree] : cfg.trees)
        if (version > lowest) cfg.grant_versions.push_back(version);
    }
  } else {
    throw SemanticError("update.kind must be flow or tree");
  }
}

void validate(Scenario& s) {
  SimConfig& cfg = s.config;
  Graph g = [&] {
    try {
      return build_graph(cfg.node_count, cfg.links, cfg.controller_site);
    } catch (const Error& e) {
      throw SemanticError(e.what());
    }
  }();

  bool flow_scheme = cfg.scheme == Scheme::NaiveFull ||
                     cfg.scheme == Scheme::PredSucc ||
                     cfg.scheme == Scheme::DistFlow;
  if (flow_scheme && !cfg.is_flow())
    throw SemanticError(std::string(scheme_name(cfg.scheme)) +
                        " needs a flow update");
  if (cfg.scheme == Scheme::VersionedTree && cfg.trees.empty())
    throw SemanticError("VERSIONED_TREE needs a tree update");
  if (cfg.is_flow() && !cfg.trees.empty())
    throw SemanticError("a scenario holds either a flow or a tree update");

  if (cfg.is_flow()) {
    try {
      prove_flow(g, cfg.new_path, cfg.new_tag);
      if (!cfg.old_path.empty()) prove_flow(g, cfg.old_path, cfg.old_tag);
    } catch (const Error& e) {
      throw SemanticError(e.what());
    }
    if (!cfg.old_path.empty()) {
      if (cfg.old_path.front() != cfg.new_path.front() ||
          cfg.old_path.back() != cfg.new_path.back())
        throw SemanticError("old and new paths must share their endpoints");
      if (cfg.old_tag == cfg.new_tag)
        throw SemanticError("old and new flow tags must differ");
    }
    if (!cfg.link_failures.empty())
      throw SemanticError("link failures are only supported for tree scenarios");
    if (!cfg.lost_grants.empty())
      throw SemanticError("lost grants are only supported for tree scenarios");
  } else if (!cfg.trees.empty()) {
    for (const auto& [version, parents] : cfg.trees) {
      try {
        prove_tree(g, parents, cfg.tree_destination, version);
      } catch (const Error& e) {
        throw SemanticError("tree version " + std::to_string(version) + ": " +
                            e.what());
      }
    }
    for (std::size_t v = 0; v < cfg.node_count; ++v) {
      auto it = cfg.initial_assignment.find(static_cast<NodeId>(v));
      if (it == cfg.initial_assignment.end())
        throw SemanticError("initial_assignment must cover every node");
      if (!cfg.trees.count(it->second))
        throw SemanticError("initial_assignment refers to unknown tree version " +
                            std::to_string(it->second));
    }
    std::sort(cfg.grant_versions.begin(), cfg.grant_versions.end());
    for (unsigned v : cfg.grant_versions)
      if (!cfg.trees.count(v))
        throw SemanticError("grant version " + std::to_string(v) +
                            " has no tree");
    if (cfg.scheme == Scheme::CentralBaseline) {
      if (!cfg.grant_versions.empty())
        throw SemanticError("CENTRAL_BASELINE sends commands, not grants");
      if (cfg.trees.size() != 2)
        throw SemanticError(
            "a central tree update needs exactly two trees (old and new)");
    }
    for (const auto& lg : cfg.lost_grants) {
      if (std::find(cfg.grant_versions.begin(), cfg.grant_versions.end(),
                    lg.version) == cfg.grant_versions.end())
        throw SemanticError("lost grant version " + std::to_string(lg.version) +
                            " is never granted");
      if (lg.node >= cfg.node_count)
        throw SemanticError("lost grant node is out of range");
    }
  } else {
    throw SemanticError("update is required");
  }

  for (const auto& lf : cfg.link_failures) {
    if (!g.has_link(lf.link.first, lf.link.second))
      throw SemanticError("link_failures names a link that is not in the graph");
    if (lf.at < 0) throw SemanticError("link failure time must not be negative");
  }
  for (NodeId v : cfg.trace_sources)
    if (v >= cfg.node_count)
      throw SemanticError("trace source is out of range");
  if (cfg.probe_every == 0)
    throw SemanticError("monitor.probe_every must be at least 1");
}

}  // namespace

Scenario parse_scenario(const json& root) {
  if (!root.is_object()) throw SchemaError("scenario must be a JSON object");
  Scenario s;
  if (root.contains("generator")) {
    const json& gen = as_object(root["generator"], "generator");
    std::string name = as_string(field(gen, "name", "generator"), "generator.name");
    if (name != "fig1_chain")
      throw SemanticError("unknown generator: " + name);
    unsigned l = static_cast<unsigned>(
        as_uint(field(gen, "l", "generator"), "generator.l"));
    std::string variant =
        as_string(field(gen, "variant", "generator"), "generator.variant");
    bool central;
    if (variant == "central")
      central = true;
    else if (variant == "distflow")
      central = false;
    else
      throw SemanticError("generator.variant must be central or distflow");
    s.config = fig1_chain(l, central);
    s.name = root.contains("name")
                 ? as_string(root["name"], "name")
                 : "fig1_chain_l" + std::to_string(l) + "_" + variant;
  } else {
    s.name = root.contains("name") ? as_string(root["name"], "name") : "scenario";
    std::string scheme =
        as_string(field(root, "scheme", "scenario"), "scheme");
    auto parsed = scheme_from_name(scheme);
    if (!parsed) throw SemanticError("unknown scheme: " + scheme);
    s.config.scheme = *parsed;

    const json& graph = as_object(field(root, "graph", "scenario"), "graph");
    s.config.node_count = as_uint(field(graph, "nodes", "graph"), "graph.nodes");
    if (s.config.node_count == 0)
      throw SemanticError("graph.nodes must be at least 1");
    for (const auto& l : as_array(field(graph, "links", "graph"), "graph.links")) {
      const json& pair = as_array(l, "graph.links[]");
      if (pair.size() != 2)
        throw SchemaError("graph.links entries are [a, b] pairs");
      s.config.links.push_back(
          make_link(as_node(pair[0], "graph.links[]", s.config.node_count),
                    as_node(pair[1], "graph.links[]", s.config.node_count)));
    }
    if (graph.contains("controller_site"))
      s.config.controller_site = as_node(graph["controller_site"],
                                         "graph.controller_site",
                                         s.config.node_count);

    parse_update(field(root, "update", "scenario"), s.config);
  }

  if (root.contains("policy")) parse_policy(root["policy"], s.config.policy);

  if (root.contains("faults")) {
    const json& faults = as_object(root["faults"], "faults");
    if (faults.contains("link_failures"))
      for (const auto& e : as_array(faults["link_failures"], "faults.link_failures")) {
        as_object(e, "faults.link_failures[]");
        const json& pair = as_array(field(e, "link", "link_failures[]"),
                                    "link_failures[].link");
        if (pair.size() != 2)
          throw SchemaError("link_failures[].link is an [a, b] pair");
        LinkFailure lf;
        lf.link = make_link(
            as_node(pair[0], "link_failures[].link", s.config.node_count),
            as_node(pair[1], "link_failures[].link", s.config.node_count));
        lf.at = static_cast<SimTime>(
            as_uint(field(e, "at", "link_failures[]"), "link_failures[].at"));
        s.config.link_failures.push_back(lf);
      }
    if (faults.contains("lost_grants"))
      for (const auto& e : as_array(faults["lost_grants"], "faults.lost_grants")) {
        as_object(e, "faults.lost_grants[]");
        LostGrant lg;
        lg.version = static_cast<unsigned>(as_uint(
            field(e, "version", "lost_grants[]"), "lost_grants[].version"));
        lg.node = as_node(field(e, "node", "lost_grants[]"),
                          "lost_grants[].node", s.config.node_count);
        s.config.lost_grants.push_back(lg);
      }
  }

  if (root.contains("monitor")) {
    const json& mon = as_object(root["monitor"], "monitor");
    if (mon.contains("probe_every"))
      s.config.probe_every =
          static_cast<unsigned>(as_uint(mon["probe_every"], "monitor.probe_every"));
    if (mon.contains("trace_sources"))
      s.config.trace_sources = as_path(mon["trace_sources"],
                                       "monitor.trace_sources",
                                       s.config.node_count);
  }

  if (root.contains("mutations"))
    for (const auto& m : as_array(root["mutations"], "mutations")) {
      std::string name = as_string(m, "mutations[]");
      if (name == "disable_gate")
        s.config.disable_gate = true;
      else
        throw SemanticError("unknown mutation: " + name);
    }

  if (root.contains("expect")) {
    std::string e = as_string(root["expect"], "expect");
    if (e != "complete" && e != "incomplete")
      throw SemanticError("expect must be complete or incomplete");
    s.expect = e;
  }

  validate(s);
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioInvalid("cannot open scenario file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(j);
}

json scenario_to_json(const Scenario& s) {
  const SimConfig& cfg = s.config;
  json j;
  j["name"] = s.name;
  j["scheme"] = scheme_name(cfg.scheme);
  j["graph"]["nodes"] = cfg.node_count;
  json links = json::array();
  for (const auto& l : cfg.links) links.push_back(json::array({l.first, l.second}));
  j["graph"]["links"] = links;
  j["graph"]["controller_site"] = cfg.controller_site;

  json update;
  if (cfg.is_flow()) {
    update["kind"] = "flow";
    if (!cfg.old_tag.empty()) {
      update["old_tag"] = cfg.old_tag;
      update["old_path"] = cfg.old_path;
    }
    update["new_tag"] = cfg.new_tag;
    update["new_path"] = cfg.new_path;
  } else {
    update["kind"] = "tree";
    update["destination"] = cfg.tree_destination;
    json trees = json::array();
    for (const auto& [version, parents] : cfg.trees) {
      json tree;
      tree["version"] = version;
      json pl = json::array();
      for (std::size_t v = 0; v < cfg.node_count; ++v) {
        auto p = parents.at(static_cast<NodeId>(v));
        pl.push_back(p ? json(*p) : json(nullptr));
      }
      tree["parents"] = pl;
      trees.push_back(tree);
    }
    update["trees"] = trees;
    json init;
    for (const auto& [v, version] : cfg.initial_assignment)
      init[std::to_string(v)] = version;
    update["initial_assignment"] = init;
    update["grant_versions"] = cfg.grant_versions;
  }
  j["update"] = update;

  json policy;
  if (cfg.policy.kind == DeliveryPolicy::Kind::Fifo) {
    policy["kind"] = "fifo";
  } else {
    policy["kind"] = "jitter";
    policy["seed"] = cfg.policy.seed;
    policy["max_extra_delay"] = cfg.policy.max_extra_delay;
  }
  j["policy"] = policy;

  if (!cfg.link_failures.empty() || !cfg.lost_grants.empty()) {
    json faults;
    if (!cfg.link_failures.empty()) {
      json lfs = json::array();
      for (const auto& lf : cfg.link_failures) {
        json e;
        e["link"] = json::array({lf.link.first, lf.link.second});
        e["at"] = lf.at;
        lfs.push_back(e);
      }
      faults["link_failures"] = lfs;
    }
    if (!cfg.lost_grants.empty()) {
      json lgs = json::array();
      for (const auto& lg : cfg.lost_grants) {
        json e;
        e["version"] = lg.version;
        e["node"] = lg.node;
        lgs.push_back(e);
      }
      faults["lost_grants"] = lgs;
    }
    j["faults"] = faults;
  }

  if (cfg.probe_every != 1 || !cfg.trace_sources.empty()) {
    json mon;
    if (cfg.probe_every != 1) mon["probe_every"] = cfg.probe_every;
    if (!cfg.trace_sources.empty()) mon["trace_sources"] = cfg.trace_sources;
    j["monitor"] = mon;
  }
  if (cfg.disable_gate) j["mutations"] = json::array({"disable_gate"});
  if (s.expect) j["expect"] = *s.expect;
  return j;
}

SimConfig fig1_chain(unsigned l, bool central) {
  if (l < 6) throw SemanticError("fig1_chain needs l >= 6");
  SimConfig cfg;
  cfg.node_count = l;
  for (NodeId i = 0; i + 1 < l; ++i) cfg.links.push_back(make_link(i, i + 1));
  cfg.links.push_back(make_link(l - 1, 0));
  cfg.controller_site = 0;
  if (central) {
    cfg.scheme = Scheme::CentralBaseline;
    cfg.tree_destination = 0;
    std::map<NodeId, std::optional<NodeId>> oldp, newp;
    oldp[0] = std::nullopt;
    newp[0] = std::nullopt;
    oldp[1] = 0;
    newp[1] = 0;
    for (NodeId i = 2; i <= l - 2; ++i) oldp[i] = i + 1;
    oldp[l - 1] = 0;
    for (NodeId i = 2; i <= l - 1; ++i) newp[i] = i - 1;
    cfg.trees[1] = std::move(oldp);
    cfg.trees[2] = std::move(newp);
    for (NodeId v = 0; v < l; ++v) cfg.initial_assignment[v] = 1;
  } else {
    cfg.scheme = Scheme::DistFlow;
    cfg.old_tag = "F1";
    cfg.new_tag = "F2";
    cfg.old_path = {static_cast<NodeId>(l - 3), static_cast<NodeId>(l - 2),
                    static_cast<NodeId>(l - 1), 0};
    for (NodeId v = l - 3; v >= 1; --v) cfg.new_path.push_back(v);
    cfg.new_path.push_back(0);
  }
  return cfg;
}

}  // namespace upsim
