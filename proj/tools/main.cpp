#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "upsim/errors.hpp"
#include "upsim/metrics.hpp"
#include "upsim/scenario.hpp"
#include "upsim/simulator.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kSafetyViolation = 2;
constexpr int kIncomplete = 3;
constexpr int kUsage = 64;
constexpr int kInternal = 70;

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw upsim::Error("cannot write to " + out_path);
  out << text;
}

std::string report_text(const upsim::Scenario& sc, const upsim::RunResult& r) {
  std::ostringstream out;
  out << "scenario: " << sc.name << '\n';
  out << "scheme: " << upsim::scheme_name(sc.config.scheme) << '\n';
  out << "nodes: " << sc.config.node_count << '\n';
  out << "status: " << upsim::run_status_name(r.status) << '\n';
  out << "completion_time: " << r.completion_time << '\n';
  out << "applications: " << r.applications.size() << '\n';
  out << "rounds: " << r.rounds << '\n';
  out << "messages: " << r.messages_sent << '\n';
  out << "alarms: " << r.alarm_count << '\n';
  out << "violations: " << r.violations.size() << '\n';
  for (const auto& v : r.violations)
    out << "  t=" << v.at << ' ' << v.kind << ": " << v.detail << '\n';
  if (!r.end_traces.empty()) {
    std::size_t delivered = 0;
    for (const auto& et : r.end_traces)
      if (std::holds_alternative<upsim::PacketDelivered>(et.result))
        delivered += 1;
    out << "packet_traces: " << delivered << '/' << r.end_traces.size()
        << " delivered\n";
    for (const auto& et : r.end_traces) {
      out << "  from " << et.source << ": ";
      if (const auto* d = std::get_if<upsim::PacketDelivered>(&et.result)) {
        out << "delivered via";
        for (upsim::NodeId v : d->path) out << ' ' << v;
      } else if (const auto* p = std::get_if<upsim::PacketDropped>(&et.result)) {
        out << "dropped at " << p->at;
      } else {
        out << "looped";
      }
      out << '\n';
    }
  }
  return out.str();
}

int run_exit_code(const upsim::Scenario& sc, bool expect_incomplete_flag,
                  const upsim::RunResult& r) {
  bool expect_incomplete =
      expect_incomplete_flag || (sc.expect && *sc.expect == "incomplete");
  switch (r.status) {
    case upsim::RunStatus::SafetyViolation:
      return kSafetyViolation;
    case upsim::RunStatus::Complete:
      return expect_incomplete ? kIncomplete : kOk;
    case upsim::RunStatus::QuiescentIncomplete:
      return expect_incomplete ? kOk : kIncomplete;
  }
  return kInternal;
}

int do_run(const std::string& path, bool seed_given, std::uint64_t seed,
           const std::string& out_path, const std::string& emit,
           bool expect_incomplete) {
  upsim::Scenario sc = upsim::load_scenario_file(path);
  if (seed_given) sc.config.policy.seed = seed;
  upsim::RunResult r = upsim::run_simulation(sc.config);

  if (emit == "trace") {
    write_output(upsim::trace_text(r), out_path);
  } else if (emit == "report") {
    write_output(report_text(sc, r), out_path);
  } else {
    if (out_path.empty()) {
      std::cout << upsim::trace_text(r) << '\n' << report_text(sc, r);
    } else {
      write_output(upsim::trace_text(r), out_path);
      std::cout << report_text(sc, r);
    }
  }
  return run_exit_code(sc, expect_incomplete, r);
}

int do_enumerate(const std::string& path, std::uint64_t cap,
                 const std::string& mode, const std::string& out_path) {
  upsim::Scenario sc = upsim::load_scenario_file(path);
  if (!sc.config.link_failures.empty() || !sc.config.lost_grants.empty())
    throw upsim::SemanticError("enumerate does not support fault scenarios");

  upsim::EnumOptions opt;
  opt.cap = cap;
  opt.dedup = mode == "reduced";
  upsim::EnumStats stats;
  try {
    stats = upsim::enumerate_interleavings(sc.config, opt);
  } catch (const upsim::ExplosionGuard& e) {
    std::cerr << e.what() << '\n';
    return kIncomplete;
  }

  std::ostringstream out;
  out << "scenario: " << sc.name << '\n';
  out << "mode: " << mode << '\n';
  out << "interleavings: " << stats.interleavings << '\n';
  out << "transitions: " << stats.transitions << '\n';
  if (opt.dedup) out << "distinct_states: " << stats.distinct_states << '\n';
  out << "complete: " << stats.complete << '\n';
  out << "incomplete: " << stats.incomplete << '\n';
  out << "violating: " << stats.violating << '\n';
  write_output(out.str(), out_path);
  return stats.any_violation ? kSafetyViolation : kOk;
}

int do_sweep(const std::string& lengths_str, const std::string& schemes_str,
             const std::string& out_path) {
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        if (!cur.empty()) parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
  };

  std::vector<unsigned> lengths;
  for (const auto& tok : split(lengths_str)) {
    try {
      lengths.push_back(static_cast<unsigned>(std::stoul(tok)));
    } catch (...) {
      throw upsim::SemanticError("--lengths expects comma-separated integers");
    }
  }
  std::vector<bool> central_flags;
  for (const auto& tok : split(schemes_str)) {
    if (tok == "central" || tok == "CENTRAL_BASELINE")
      central_flags.push_back(true);
    else if (tok == "distflow" || tok == "DIST_FLOW")
      central_flags.push_back(false);
    else
      throw upsim::SemanticError("--schemes accepts central and distflow");
  }
  if (lengths.empty() || central_flags.empty())
    throw upsim::SemanticError("sweep needs at least one length and one scheme");

  std::ostringstream out;
  bool any_violation = false;
  for (bool central : central_flags) {
    std::vector<double> xs, ys;
    for (unsigned l : lengths) {
      upsim::SimConfig cfg = upsim::fig1_chain(l, central);
      upsim::RunResult r = upsim::run_simulation(cfg);
      any_violation = any_violation || !r.violations.empty();
      out << "scheme=" << upsim::scheme_name(cfg.scheme) << " l=" << l
          << " status=" << upsim::run_status_name(r.status)
          << " completion_time=" << r.completion_time << " rounds=" << r.rounds
          << " messages=" << r.messages_sent << '\n';
      xs.push_back(static_cast<double>(l));
      ys.push_back(static_cast<double>(r.completion_time));
    }
    if (xs.size() >= 3) {
      upsim::FitResult fit = upsim::polyfit(xs, ys, central ? 2 : 1);
      out << "fit scheme=" << (central ? "CENTRAL_BASELINE" : "DIST_FLOW")
          << " degree=" << (central ? 2 : 1) << " r2=" << std::fixed
          << std::setprecision(6) << fit.r2 << " coeffs=[";
      for (std::size_t i = 0; i < fit.coeffs.size(); ++i)
        out << (i ? ", " : "") << std::setprecision(4) << fit.coeffs[i];
      out << "]\n";
      out.unsetf(std::ios::fixed);
    }
  }
  write_output(out.str(), out_path);
  return any_violation ? kSafetyViolation : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic simulator for locally verifiable network updates"};
  app.require_subcommand(1);

  std::string run_path, run_out, run_emit = "trace";
  std::uint64_t run_seed = 0;
  bool expect_incomplete = false;
  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("scenario", run_path, "scenario JSON file")->required();
  auto* seed_opt =
      run->add_option("--seed", run_seed, "override the delivery policy seed");
  run->add_option("--out", run_out, "write output to this file");
  run->add_option("--emit", run_emit, "trace, report, or both")
      ->check(CLI::IsMember({"trace", "report", "both"}));
  run->add_flag("--expect-incomplete", expect_incomplete,
                "treat a quiescent incomplete run as success");

  std::string enum_path, enum_out, enum_mode = "reduced";
  std::uint64_t cap = 1000000;
  auto* enumerate =
      app.add_subcommand("enumerate", "explore every delivery order");
  enumerate->add_option("scenario", enum_path, "scenario JSON file")->required();
  enumerate->add_option("--cap", cap, "transition budget");
  enumerate->add_option("--mode", enum_mode, "full or reduced")
      ->check(CLI::IsMember({"full", "reduced"}));
  enumerate->add_option("--out", enum_out, "write output to this file");

  std::string sweep_lengths = "8,16,32,64", sweep_schemes = "central,distflow",
              sweep_out;
  auto* sweep =
      app.add_subcommand("sweep", "compare schemes across chain lengths");
  sweep->add_option("--lengths", sweep_lengths, "comma-separated ring sizes");
  sweep->add_option("--schemes", sweep_schemes,
                    "comma-separated: central, distflow");
  sweep->add_option("--out", sweep_out, "write output to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed())
      return do_run(run_path, seed_opt->count() > 0, run_seed, run_out,
                    run_emit, expect_incomplete);
    if (enumerate->parsed()) return do_enumerate(enum_path, cap, enum_mode, enum_out);
    if (sweep->parsed()) return do_sweep(sweep_lengths, sweep_schemes, sweep_out);
  } catch (const upsim::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const upsim::SemanticError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const upsim::ScenarioInvalid& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const upsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
