#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "upsim/forwarding.hpp"
#include "upsim/protocols.hpp"

namespace upsim {

using json = nlohmann::ordered_json;

struct DeliveryPolicy {
  enum class Kind { Fifo, SeededRandomJitter };
  Kind kind = Kind::Fifo;
  std::uint64_t seed = 0;
  SimTime max_extra_delay = 0;
};

struct LinkFailure {
  Link link;
  SimTime at = 0;
};

// A grant the controller sends but the network loses in transit.
struct LostGrant {
  unsigned version = 0;
  NodeId node = 0;
};

/**
 * One fully specified simulation: topology, scheme, the update to perform,
 * the delivery policy, and any injected faults. Built by hand in tests or
 * parsed from a scenario file.
 */
struct SimConfig {
  Scheme scheme = Scheme::DistFlow;
  std::size_t node_count = 0;
  std::vector<Link> links;
  NodeId controller_site = 0;
  bool disable_gate = false;

  // Flow update.
  FlowTag old_tag;
  FlowTag new_tag;
  std::vector<NodeId> old_path;
  std::vector<NodeId> new_path;

  // Tree update. `trees` maps version to a full parent assignment
  // (destination maps to none). Every node starts on its version from
  // `initial_assignment`; `grant_versions` lists the versions the controller
  // distributes, ascending.
  NodeId tree_destination = 0;
  std::map<unsigned, std::map<NodeId, std::optional<NodeId>>> trees;
  std::map<NodeId, unsigned> initial_assignment;
  std::vector<unsigned> grant_versions;

  DeliveryPolicy policy;
  std::vector<LinkFailure> link_failures;
  std::vector<LostGrant> lost_grants;

  // After a run with dead links, trace one data packet from each of these
  // sources (default: every node except the destination).
  std::vector<NodeId> trace_sources;
  unsigned probe_every = 1;  // run the safety monitor every k-th event

  bool is_flow() const { return !new_path.empty(); }
};

struct Violation {
  SimTime at = 0;
  std::string kind;  // "loop" or "blackhole"
  std::string detail;
};

struct EndTrace {
  NodeId source = 0;
  PacketResult result;
};

enum class RunStatus { Complete, QuiescentIncomplete, SafetyViolation };

const char* run_status_name(RunStatus s);

struct RunResult {
  RunStatus status = RunStatus::Complete;
  SimTime completion_time = 0;  // time of the last application
  std::size_t messages_sent = 0;
  std::size_t alarm_count = 0;  // nodes whose alarm latched
  unsigned rounds = 0;          // longest enabling chain of applications
  std::vector<Violation> violations;
  std::vector<Application> applications;
  std::vector<std::string> controller_alarms;
  std::vector<EndTrace> end_traces;
  std::vector<json> trace;  // line-delimited event log, summary row last
  ForwardingState final_rules{0};
  std::vector<NodeState> final_nodes;
};

RunResult run_simulation(const SimConfig& cfg);

std::string trace_text(const RunResult& r);

// Returns a copy of the scenario with one more link failure scheduled.
// Throws UnknownLink when the link is not part of the topology.
SimConfig inject_link_failure(const SimConfig& cfg, Link link, SimTime at);

// Data-plane walk that survives dead links: at each node the applied rule is
// followed when its link is alive; otherwise the packet detours to an alive
// neighbor whose applied label for the same destination has either smaller
// depth or a higher version (smallest depth first, then highest version,
// then lowest id). No labels or rules change.
PacketResult trace_packet_with_fallback(const ForwardingState& rules,
                                        const Graph& g,
                                        const std::vector<NodeState>& nodes,
                                        NodeId source, const MatchKey& key,
                                        NodeId dest,
                                        const std::set<Link>& dead_links);

struct EnumOptions {
  std::uint64_t cap = 1000000;  // transition budget before ExplosionGuard
  bool dedup = false;           // merge states reached by different orders
};

struct EnumLeaf {
  bool complete = false;
  bool violation = false;
  std::size_t alarms = 0;
};

struct EnumStats {
  std::uint64_t interleavings = 0;  // terminal states reached
  std::uint64_t transitions = 0;
  std::uint64_t distinct_states = 0;  // dedup mode only
  std::uint64_t complete = 0;
  std::uint64_t incomplete = 0;
  std::uint64_t violating = 0;
  bool any_violation = false;
};

// Explores every order in which pending messages can be delivered. With
// dedup, states reached along different orders are expanded once; every
// reachable delivery transition is still examined, so a clean result means
// no reachable interleaving violates safety.
EnumStats enumerate_interleavings(
    const SimConfig& cfg, const EnumOptions& opt,
    const std::function<void(const EnumLeaf&)>& sink = nullptr);

}  // namespace upsim
