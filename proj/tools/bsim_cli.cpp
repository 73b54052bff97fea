#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bsim/harness/acceptance.hpp"
#include "bsim/harness/config.hpp"
#include "bsim/harness/crash_suite.hpp"
#include "bsim/harness/report.hpp"
#include "bsim/harness/workload.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kCriterion = 2;
constexpr int kFault = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config file plus one --<key> flag per configuration key.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;

  void attach(CLI::App& cmd) {
    cmd.add_option("-c,--config", file, "INI config file ([device] [host] [block] [fs] [workload])")
        ->check(CLI::ExistingFile);
    cmd.add_option("--set", sets, "override as key=value; repeatable");
    for (const auto& k : bsim::config_keys()) {
      std::string help = "[" + k.section + "] " + k.help;
      if (k.name == "regime") help += "; a comma list runs one simulation per regime";
      cmd.add_option("--" + k.name, values[k.name], help);
    }
  }

  // Resolved configs; several when --regime lists more than one.
  std::vector<bsim::RunConfig> resolve() const {
    bsim::Assignments as;
    if (!file.empty()) as = bsim::read_ini_file(file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      as.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    std::vector<std::string> regimes;
    for (const auto& k : bsim::config_keys()) {
      const auto& v = values.at(k.name);
      if (v.empty()) continue;
      if (k.name == "regime") {
        std::stringstream ss(v);
        for (std::string r; std::getline(ss, r, ',');) {
          if (!r.empty()) regimes.push_back(r);
        }
        continue;
      }
      as.emplace_back(k.name, v);
    }
    std::vector<bsim::RunConfig> out;
    if (regimes.empty()) regimes.push_back("");
    for (const auto& r : regimes) {
      bsim::RunConfig c;
      auto a = as;
      if (!r.empty()) a.emplace_back("regime", r);
      bsim::apply(c, a);
      c.validate();
      out.push_back(std::move(c));
    }
    return out;
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  return f;
}

int cmd_run(const ConfigFlags& flags, const std::string& format, const std::string& report_out,
            const std::string& trace_out, const std::string& qd_out, bool print_config) {
  const auto fmt = bsim::parse_report_format(format);
  const auto configs = flags.resolve();
  if (print_config) {
    for (const auto& c : configs) std::cout << bsim::to_ini(c) << "\n";
    return kOk;
  }
  if (configs.size() > 1 && (!trace_out.empty() || !qd_out.empty())) {
    throw std::invalid_argument("--trace-out and --qd-series need a single regime");
  }
  std::vector<bsim::Report> reports;
  for (const auto& c : configs) {
    bsim::SimOptions opt;
    opt.trace = !trace_out.empty();
    opt.queue_series = !qd_out.empty();
    bsim::Simulation sim(c, opt);
    sim.run();
    reports.push_back(bsim::summarize(sim));
    if (!trace_out.empty()) {
      auto f = open_out(trace_out);
      bsim::write_trace(f, sim.stack());
    }
    if (!qd_out.empty()) {
      auto f = open_out(qd_out);
      bsim::write_queue_series(f, sim.stack().device);
    }
  }
  if (report_out.empty()) {
    bsim::write_report(std::cout, reports, fmt);
  } else {
    auto f = open_out(report_out);
    bsim::write_report(f, reports, fmt);
  }
  return kOk;
}

nlohmann::ordered_json verdict_json(const bsim::CheckReport& r) {
  nlohmann::ordered_json j;
  j["states_checked"] = r.states_checked;
  j["snapshots"] = r.snapshots;
  j["violation_count"] = r.violation_count;
  j["conjuncts"] = {{"issue_dispatch", r.issue_dispatch},
                    {"dispatch_transfer", r.dispatch_transfer},
                    {"transfer_persist", r.transfer_persist},
                    {"issue_persist", r.issue_persist}};
  j["max_recovered_txns"] = r.max_recovered;
  auto vs = nlohmann::ordered_json::array();
  for (const auto& v : r.violations) {
    nlohmann::ordered_json o;
    o["kind"] = v.kind;
    o["crash_time"] = v.crash_time.us();
    auto w = nlohmann::ordered_json::array();
    for (const auto& b : v.witness) w.push_back({{"block", b.addr.value}, {"version", b.version}});
    o["witness_blocks"] = w;
    o["detail"] = v.detail;
    vs.push_back(o);
  }
  j["violations"] = vs;
  return j;
}

int cmd_crashcheck(const ConfigFlags& flags, bool use_workload, const std::string& mutation,
                   const std::string& strategy, std::uint64_t samples, std::uint64_t seeds) {
  bsim::CheckOptions opt;
  if (strategy == "sampled") {
    opt.strategy = bsim::Strategy::sampled;
  } else if (strategy != "exhaustive") {
    throw std::invalid_argument("unknown strategy '" + strategy + "'");
  }
  opt.samples = samples;
  const auto m = bsim::parse_mutation(mutation);

  nlohmann::ordered_json out;
  bsim::CheckReport total;
  if (!use_workload) {
    const auto suite = bsim::run_crash_suite(m, seeds, opt);
    total = suite.total;
    out["suite"] = "standard";
    out["mutation"] = mutation;
    out["traces"] = suite.cases.size();
  } else {
    auto configs = flags.resolve();
    for (auto& c : configs) {
      bsim::apply_mutation(c.stack, m);
      opt.seed = c.workload.seed;
      bsim::SimOptions so;
      so.record_crash = true;
      bsim::Simulation sim(c, so);
      sim.run();
      total.merge(bsim::verify(sim.stack(), *sim.recorder(), opt));
    }
    out["suite"] = "workload";
    out["mutation"] = mutation;
  }
  auto v = verdict_json(total);
  for (auto it = v.begin(); it != v.end(); ++it) out[it.key()] = it.value();
  std::cout << out.dump(2) << "\n";
  return total.ok() && total.conjunction() && total.issue_persist ? kOk : kCriterion;
}

int cmd_accept() {
  bsim::AcceptanceSuite suite;
  const auto results = suite.run_all(&std::cout);
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.pass ? 1 : 0;
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return passed == results.size() ? kOk : kCriterion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator of a flash IO stack with barrier writes"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  std::string format = "text";
  std::string report_out;
  std::string trace_out;
  std::string qd_out;
  bool print_config = false;
  auto* run = app.add_subcommand("run", "run a workload and report metrics");
  run_flags.attach(*run);
  run->add_option("--report-format", format, "text | json | csv")->check(CLI::IsMember({"text", "json", "csv"}));
  run->add_option("-o,--report-out", report_out, "write the report here instead of stdout");
  run->add_option("--trace-out", trace_out, "JSON Lines trace of events, dispatches, completions and syscalls");
  run->add_option("--qd-series", qd_out, "queue-depth time series as CSV");
  run->add_flag("--print-config", print_config, "print the resolved configuration and exit");

  ConfigFlags cc_flags;
  std::string mutation = "none";
  std::string strategy = "exhaustive";
  std::uint64_t samples = 1000;
  std::uint64_t seeds = 10;
  auto* cc = app.add_subcommand("crashcheck", "enumerate crash states and check ordering and journal consistency");
  cc_flags.attach(*cc);
  cc->add_option("--mutation", mutation,
                 "disable one mechanism: none | ordered_priority | epoch_blocking | barrier_reassignment | "
                 "flush_before_commit");
  cc->add_option("--strategy", strategy, "exhaustive | sampled")->check(CLI::IsMember({"exhaustive", "sampled"}));
  cc->add_option("--samples", samples, "crash states drawn by the sampled strategy");
  cc->add_option("--seeds", seeds, "raw block traces per barrier mode in the standard suite");

  auto* acc = app.add_subcommand("accept", "run the acceptance criteria");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags, format, report_out, trace_out, qd_out, print_config);
    if (cc->parsed()) {
      bool custom = !cc_flags.file.empty() || !cc_flags.sets.empty();
      for (const auto& [k, v] : cc_flags.values) custom = custom || !v.empty();
      return cmd_crashcheck(cc_flags, custom, mutation, strategy, samples, seeds);
    }
    if (acc->parsed()) return cmd_accept();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const bsim::ExhaustiveRefused& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kFault;
  } catch (const std::exception& e) {
    std::cerr << "internal fault: " << e.what() << "\n";
    return kFault;
  }
  return kUsage;
}
