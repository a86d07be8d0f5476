#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "upsim/labeling.hpp"

namespace upsim {

using SimTime = std::int64_t;

// Controller pseudo-id used as message endpoint; it attaches to the graph at
// controller_site for distance purposes.
inline constexpr NodeId kControllerId = static_cast<NodeId>(-1);

enum class Scheme { NaiveFull, PredSucc, DistFlow, VersionedTree, CentralBaseline };

const char* scheme_name(Scheme s);                  // e.g. "DIST_FLOW"
std::optional<Scheme> scheme_from_name(const std::string& name);

using Label = std::variant<FlowLabel, TreeLabel>;

struct Message {
  enum class Kind { LabelGrant, Announce, Ack, Command, Alarm };

  Kind kind = Kind::Announce;
  NodeId sender = 0;
  NodeId receiver = 0;
  MatchKey key;
  std::optional<Label> label;           // grant / announce / command payload
  std::optional<NodeId> rule;           // command-only: next hop to install
  std::uint32_t ordinal = 0;            // announce: the application it reports;
                                        // ack: the acked application
  std::optional<std::uint32_t> depends_on;  // command: previously acked application
  std::string note;                     // alarm reason
  SimTime sent_at = 0;
  SimTime deliver_at = 0;

  // Stable across runs and platforms (FNV-1a over a canonical rendering);
  // used for deterministic event ordering.
  std::uint64_t payload_hash() const;
};

const char* message_kind_name(Message::Kind k);

// What the rest of the system knows about one update scenario: the scheme,
// the routes, and which links are currently dead (owned by the simulator).
struct UpdateContext {
  Scheme scheme = Scheme::DistFlow;
  const Graph* graph = nullptr;
  bool disable_gate = false;  // test knob: skips the apply gate entirely

  // Flow updates (NaiveFull / PredSucc / DistFlow, and central flow plans).
  FlowTag old_tag;
  FlowTag new_tag;
  std::vector<NodeId> old_path;
  std::vector<NodeId> new_path;

  // Tree updates (VersionedTree, and central tree plans).
  NodeId tree_destination = 0;
  unsigned target_version = 0;

  const std::set<Link>* dead_links = nullptr;

  bool is_flow() const { return !new_path.empty(); }
  NodeId flow_source() const { return new_path.front(); }
  NodeId flow_destination() const { return new_path.back(); }
  bool link_alive(NodeId a, NodeId b) const;
  std::vector<NodeId> alive_neighbors(NodeId v) const;
};

struct AppliedEntry {
  Label label;
  std::uint32_t ordinal = 0;  // 0 = preinstalled before the scenario started
};

/**
 * Everything one node knows: its applied labels, labels granted but not yet
 * applicable, the last announcement received from each neighbor, and the
 * latching alarm flag.
 */
struct NodeState {
  NodeId id = 0;
  std::map<MatchKey, AppliedEntry> applied;
  std::vector<std::pair<MatchKey, Label>> pending;
  std::map<std::pair<NodeId, MatchKey>, AppliedEntry> neighbor_view;
  bool alarm = false;
  std::string alarm_reason;
};

// One label application (or central rule install) as recorded in traces.
struct Application {
  NodeId node = 0;
  MatchKey key;
  std::optional<Label> label;       // absent for central rule-only commands
  std::optional<NodeId> next_hop;   // rule installed; absent for anchors
  std::uint32_t ordinal = 0;
  std::optional<std::uint32_t> depends_on;  // enabling application, if gated
  bool rule_changed = false;        // filled by the simulator
  SimTime at = 0;
};

struct TransitionResult {
  std::vector<Message> out;  // sent_at/deliver_at assigned by the simulator
  std::vector<Application> applications;
};

// Pure node transition: updates state, applies every pending label whose gate
// passes (to fixpoint), announces applications to alive neighbors, runs the
// local verifier on the applied configuration and latches the alarm on NO.
// Malformed messages raise alarms, never exceptions.
TransitionResult node_on_receive(NodeState& node, const Message& msg,
                                 const UpdateContext& ctx,
                                 std::uint32_t& next_ordinal);

// The gate/fixpoint half of node_on_receive, also used at scenario start for
// preinstalled pending labels.
TransitionResult node_try_apply(NodeState& node, const UpdateContext& ctx,
                                std::uint32_t& next_ordinal);

// Local verifier for v's applied label under `key`, dispatched by scheme.
// Nodes without an applied label for the key verify YES vacuously.
Verdict verify_local(const NodeState& node, const UpdateContext& ctx,
                     const MatchKey& key);

struct ControllerState {
  // Pipelined sends, one per time unit starting at t=0 (grant schemes).
  std::vector<Message> initial_sends;
  // Central: remaining commands, released one ack at a time.
  std::deque<Message> command_queue;
  std::size_t commands_total = 0;
  std::size_t acks_received = 0;
  bool awaiting_ack = false;
  std::vector<std::string> alarms;
};

// Computes the controller's send plan.
//
// Grant schemes get one LabelGrant per (node, label), consecutive sends one
// time unit apart: flow labels in reverse path order (destination first),
// tree versions in ascending order with each wave root-first, NaiveFull one
// label for every node in the network. CENTRAL_BASELINE instead gets a
// Command queue in a safe dependency order (old-rule aware: each command
// keeps the mixed state loop-free), released one Ack at a time.
//
// `tree_waves` lists the label sets to distribute for tree updates, in
// version order. Throws InvalidRoute when a route references a non-neighbor
// next hop or no safe central order exists.
ControllerState controller_plan(
    const UpdateContext& ctx,
    const std::vector<std::map<NodeId, TreeLabel>>& tree_waves,
    const std::map<NodeId, std::optional<NodeId>>* central_old_parents,
    const std::map<NodeId, std::optional<NodeId>>* central_new_parents);

// Controller reaction: Acks release the next central command (stamped with
// the acked application as its dependency), Alarms are recorded.
std::vector<Message> controller_on_receive(ControllerState& ctrl,
                                           const Message& msg,
                                           const UpdateContext& ctx);

}  // namespace upsim
