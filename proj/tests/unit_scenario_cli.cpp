#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "upsim/errors.hpp"
#include "upsim/scenario.hpp"

using namespace upsim;

namespace {

json flow_json() {
  return json::parse(R"({
    "name": "t",
    "scheme": "DIST_FLOW",
    "graph": {"nodes": 4, "links": [[0,1],[1,2],[2,3],[0,2]], "controller_site": 3},
    "update": {"kind": "flow", "old_tag": "F1", "old_path": [0,1,2,3],
               "new_tag": "F2", "new_path": [0,2,3]}
  })");
}

json tree_json() {
  return json::parse(R"({
    "name": "t",
    "scheme": "VERSIONED_TREE",
    "graph": {"nodes": 3, "links": [[0,1],[1,2],[0,2]], "controller_site": 0},
    "update": {"kind": "tree", "destination": 0,
               "trees": [{"version": 1, "parents": [null, 0, 1]},
                         {"version": 2, "parents": [null, 0, 0]}]}
  })");
}

std::string scenario_path(const std::string& file) {
  return std::string(UPSIM_SCENARIO_DIR) + "/" + file;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  static int counter = 0;
  std::string capture = "/tmp/upsim_cli_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++) + ".txt";
  std::string cmd =
      std::string(UPSIM_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
  int status = std::system(cmd.c_str());
  if (output) *output = slurp(capture);
  std::filesystem::remove(capture);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("missing or mistyped fields are schema errors") {
  auto j = flow_json();
  j.erase("scheme");
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  j = flow_json();
  j["scheme"] = 7;
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  j = flow_json();
  j["graph"].erase("nodes");
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  j = flow_json();
  j["graph"]["links"] = json::parse("[[0,1,2]]");
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  j = flow_json();
  j["update"].erase("new_tag");
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  j = flow_json();
  j["policy"] = json::parse(R"({"kind": "jitter"})");
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  j = tree_json();
  j["update"]["initial_assignment"] = json::parse(R"({"zero": 1})");
  CHECK_THROWS_AS(parse_scenario(j), SchemaError);

  CHECK_THROWS_AS(parse_scenario(json::array()), SchemaError);
}

TEST_CASE("well-formed but wrong scenarios are semantic errors") {
  auto j = flow_json();
  j["scheme"] = "QUANTUM";
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["graph"]["links"][0] = json::parse("[0, 9]");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["graph"]["nodes"] = 0;
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  // Graph problems surface as semantic errors with the builder's message.
  j = flow_json();
  j["graph"]["links"] = json::parse("[[0,1],[1,2],[2,3],[0,2],[1,1]]");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["graph"]["nodes"] = 5;
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);  // node 4 unreachable

  j = flow_json();
  j["update"]["kind"] = "mesh";
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["update"].erase("old_path");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["update"]["new_path"] = json::parse("[1,2,3]");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);  // endpoints moved

  j = flow_json();
  j["update"]["new_tag"] = "F1";
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["update"] = tree_json()["update"];
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["update"] = flow_json()["update"];
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);
}

TEST_CASE("tree scenarios reject broken version plans") {
  auto j = tree_json();
  j["update"]["trees"][0]["version"] = 0;
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["update"]["trees"][1]["version"] = 1;
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["update"]["trees"][0]["parents"] = json::parse("[null, 0]");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["update"]["trees"][0]["parents"] = json::parse("[null, 2, 1]");
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("tree version 1"),
                       SemanticError);

  j = tree_json();
  j["update"]["initial_assignment"] = json::parse(R"({"0": 5, "1": 1, "2": 1})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["update"]["grant_versions"] = json::parse("[9]");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["scheme"] = "CENTRAL_BASELINE";
  j["update"]["grant_versions"] = json::parse("[2]");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["scheme"] = "CENTRAL_BASELINE";
  j["update"]["trees"].erase(1);
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = tree_json();
  j["faults"] = json::parse(R"({"lost_grants": [{"version": 1, "node": 1}]})");
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("never granted"),
                       SemanticError);
}

TEST_CASE("fault and monitor stanzas are validated") {
  auto j = tree_json();
  j["graph"]["links"] = json::parse("[[0,1],[1,2]]");
  j["update"]["trees"][1]["parents"] = json::parse("[null, 0, 1]");
  j["faults"] = json::parse(R"({"link_failures": [{"link": [0,2], "at": 1}]})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["faults"] = json::parse(R"({"link_failures": [{"link": [0,1], "at": 1}]})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["faults"] = json::parse(R"({"lost_grants": [{"version": 1, "node": 0}]})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["monitor"] = json::parse(R"({"probe_every": 0})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["monitor"] = json::parse(R"({"trace_sources": [9]})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["policy"] = json::parse(R"({"kind": "postal"})");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["mutations"] = json::parse(R"(["scramble"])");
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);

  j = flow_json();
  j["expect"] = "maybe";
  CHECK_THROWS_AS(parse_scenario(j), SemanticError);
}

TEST_CASE("scenarios survive a serialization round trip") {
  auto s1 = parse_scenario(flow_json());
  CHECK(s1.config.scheme == Scheme::DistFlow);
  CHECK(s1.config.node_count == 4);
  CHECK(s1.config.new_path == std::vector<NodeId>{0, 2, 3});
  json j1 = scenario_to_json(s1);
  auto s2 = parse_scenario(j1);
  CHECK(scenario_to_json(s2) == j1);
  CHECK(s2.config.old_tag == "F1");
  CHECK(s2.config.controller_site == 3);

  auto j = tree_json();
  j["update"]["grant_versions"] = json::parse("[2]");
  j["policy"] = json::parse(R"({"kind": "jitter", "seed": 7, "max_extra_delay": 2})");
  j["faults"] = json::parse(
      R"({"link_failures": [{"link": [0,1], "at": 4}],
          "lost_grants": [{"version": 2, "node": 1}]})");
  j["monitor"] = json::parse(R"({"probe_every": 2, "trace_sources": [1, 2]})");
  j["expect"] = "incomplete";
  auto t1 = parse_scenario(j);
  CHECK(t1.config.policy.kind == DeliveryPolicy::Kind::SeededRandomJitter);
  CHECK(t1.config.policy.seed == 7);
  CHECK(t1.config.probe_every == 2);
  CHECK(t1.config.link_failures.size() == 1);
  CHECK(t1.config.lost_grants.size() == 1);
  CHECK(t1.expect == std::optional<std::string>("incomplete"));
  json tj = scenario_to_json(t1);
  CHECK(scenario_to_json(parse_scenario(tj)) == tj);
}

TEST_CASE("generator stanzas expand to ring scenarios") {
  auto s = parse_scenario(
      json::parse(R"({"generator": {"name": "fig1_chain", "l": 10, "variant": "distflow"}})"));
  CHECK(s.name == "fig1_chain_l10_distflow");
  CHECK(s.config.scheme == Scheme::DistFlow);
  CHECK(s.config.node_count == 10);
  CHECK(s.config.links.size() == 10);
  CHECK(s.config.old_path == std::vector<NodeId>{7, 8, 9, 0});
  CHECK(s.config.new_path == std::vector<NodeId>{7, 6, 5, 4, 3, 2, 1, 0});

  auto c = parse_scenario(
      json::parse(R"({"name": "ring", "generator": {"name": "fig1_chain", "l": 6, "variant": "central"}})"));
  CHECK(c.name == "ring");
  CHECK(c.config.scheme == Scheme::CentralBaseline);
  CHECK(c.config.trees.size() == 2);
  CHECK(c.config.grant_versions.empty());

  CHECK_THROWS_AS(parse_scenario(json::parse(
                      R"({"generator": {"name": "fig1_chain", "l": 4, "variant": "central"}})")),
                  SemanticError);
  CHECK_THROWS_AS(parse_scenario(json::parse(
                      R"({"generator": {"name": "torus", "l": 6, "variant": "central"}})")),
                  SemanticError);
  CHECK_THROWS_AS(parse_scenario(json::parse(
                      R"({"generator": {"name": "fig1_chain", "l": 6, "variant": "mixed"}})")),
                  SemanticError);
}

TEST_CASE("scenario files load with honest errors") {
  CHECK_THROWS_AS(load_scenario_file("/nonexistent/scenario.json"),
                  ScenarioInvalid);

  std::string bad = "/tmp/upsim_bad_" + std::to_string(::getpid()) + ".json";
  std::ofstream(bad) << "{not json";
  CHECK_THROWS_AS(load_scenario_file(bad), SchemaError);
  std::filesystem::remove(bad);

  auto s = load_scenario_file(scenario_path("path4_distflow.json"));
  CHECK(s.name == "path4_distflow");
  CHECK(s.expect == std::optional<std::string>("complete"));
}

TEST_CASE("every bundled scenario parses") {
  std::size_t seen = 0;
  for (const auto& entry :
       std::filesystem::directory_iterator(UPSIM_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_scenario_file(entry.path().string()));
    ++seen;
  }
  CHECK(seen >= 14);
}

TEST_CASE("cli exit codes follow the run verdict") {
  std::string out;
  CHECK(run_cli("run " + scenario_path("fig1_l10_distflow.json") +
                    " --emit report",
                &out) == 0);
  CHECK(out.find("status: complete") != std::string::npos);
  CHECK(out.find("rounds: 8") != std::string::npos);

  // The scenario's own expectation turns a stalled run into a pass.
  CHECK(run_cli("run " + scenario_path("path5_predsucc.json") +
                " --emit report") == 0);

  // The flag flips the expectation, so a completing run now disappoints.
  CHECK(run_cli("run " + scenario_path("path3_predsucc.json") +
                " --expect-incomplete --emit report") == 3);

  CHECK(run_cli("run " + scenario_path("mutated_path4.json") +
                    " --emit report",
                &out) == 2);
  CHECK(out.find("status: safety_violation") != std::string::npos);
}

TEST_CASE("cli rejects bad invocations") {
  CHECK(run_cli("run /nonexistent/scenario.json") == 64);
  CHECK(run_cli("transmogrify") == 64);
  CHECK(run_cli("") == 64);
  // Enumeration refuses scheduled faults.
  CHECK(run_cli("enumerate " + scenario_path("fault_leaf_cut.json")) == 64);
}

TEST_CASE("cli enumeration reports the search verdict") {
  std::string out;
  CHECK(run_cli("enumerate " + scenario_path("path4_distflow.json") +
                    " --cap 200000 --mode reduced",
                &out) == 0);
  CHECK(out.find("violating: 0") != std::string::npos);

  CHECK(run_cli("enumerate " + scenario_path("mutated_path4.json") +
                " --cap 200000 --mode reduced") == 2);

  // A tiny budget trips the guard instead of silently truncating.
  CHECK(run_cli("enumerate " + scenario_path("path4_distflow.json") +
                " --cap 10 --mode full") == 3);
}

TEST_CASE("cli runs are byte reproducible") {
  std::string base = "/tmp/upsim_trace_" + std::to_string(::getpid());
  std::string scenario = scenario_path("tree_mixing_3versions.json");
  CHECK(run_cli("run " + scenario + " --emit trace --out " + base + "_1") == 0);
  CHECK(run_cli("run " + scenario + " --emit trace --out " + base + "_2") == 0);
  std::string t1 = slurp(base + "_1"), t2 = slurp(base + "_2");
  CHECK(t1.size() > 0);
  CHECK(t1 == t2);
  // A different seed reorders deliveries but the run still settles.
  CHECK(run_cli("run " + scenario + " --seed 99 --emit trace --out " + base +
                "_3") == 0);
  std::filesystem::remove(base + "_1");
  std::filesystem::remove(base + "_2");
  std::filesystem::remove(base + "_3");
}

TEST_CASE("cli sweep prints both schemes with fits") {
  std::string out;
  CHECK(run_cli("sweep --lengths 8,16,32 --schemes central,distflow", &out) == 0);
  CHECK(out.find("scheme=CENTRAL_BASELINE l=8") != std::string::npos);
  CHECK(out.find("scheme=DIST_FLOW l=32") != std::string::npos);
  CHECK(out.find("fit scheme=CENTRAL_BASELINE degree=2") != std::string::npos);
  CHECK(out.find("fit scheme=DIST_FLOW degree=1") != std::string::npos);
  CHECK(run_cli("sweep --lengths 8 --schemes hybrid") == 64);
}
