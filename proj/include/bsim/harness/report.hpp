#pragma once

#include <charconv>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsim/harness/workload.hpp"

namespace bsim {

struct LatencyStats {
  std::uint64_t count = 0;
  double mean = 0;
  double median = 0;
  double p99 = 0;
  double p999 = 0;
  double p9999 = 0;
  double max = 0;
};

// Nearest-rank percentile over sorted microsecond samples.
inline double percentile(const std::vector<std::uint64_t>& sorted, double q) {
  if (sorted.empty()) return 0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return static_cast<double>(sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1]);
}

inline LatencyStats latency_stats(const std::vector<SimTime>& samples) {
  LatencyStats s;
  if (samples.empty()) return s;
  std::vector<std::uint64_t> v;
  v.reserve(samples.size());
  double sum = 0;
  for (auto t : samples) {
    v.push_back(t.us());
    sum += static_cast<double>(t.us());
  }
  std::sort(v.begin(), v.end());
  s.count = v.size();
  s.mean = sum / static_cast<double>(v.size());
  s.median = percentile(v, 0.5);
  s.p99 = percentile(v, 0.99);
  s.p999 = percentile(v, 0.999);
  s.p9999 = percentile(v, 0.9999);
  s.max = static_cast<double>(v.back());
  return s;
}

struct CommitIntervals {
  std::uint64_t samples = 0;
  double mean = 0;
};

// Gap between the end of JC_i's dispatch and the end of JD_{i+1}'s,
// counted only when transaction i+1 had been requested by then.
inline CommitIntervals commit_intervals(const FileSystem& fs) {
  CommitIntervals c;
  const auto& txns = fs.transactions();
  double sum = 0;
  for (std::size_t i = 0; i + 1 < txns.size(); ++i) {
    const auto& a = txns[i];
    const auto& b = txns[i + 1];
    if (!a.jc_block || !b.jc_block) continue;
    if (!b.commit_requested || b.requested_at > a.jc_dispatched) continue;
    sum += static_cast<double>((b.jd_dispatched - a.jc_dispatched).us());
    ++c.samples;
  }
  if (c.samples) c.mean = sum / static_cast<double>(c.samples);
  return c;
}

struct Report {
  std::string profile;
  std::string regime;
  std::string workload;
  std::string sync_call;
  std::uint64_t ops = 0;
  std::uint64_t seed = 0;
  unsigned actors = 1;
  std::uint64_t queue_depth = 0;

  double makespan_us = 0;
  double iops = 0;
  LatencyStats latency;
  double mean_qd = 0;
  std::uint64_t max_qd = 0;
  double switches_per_op = 0;
  double commit_interval_us = 0;
  std::uint64_t commit_interval_samples = 0;

  std::uint64_t transactions = 0;
  std::uint64_t flush_commands = 0;
  std::uint64_t barrier_commands = 0;
  std::uint64_t conflicts = 0;
  std::uint64_t retries = 0;
  std::uint64_t events = 0;
  std::uint64_t trace_hash = 0;
};

inline Report summarize(const Simulation& sim) {
  const IoStack& s = sim.stack();
  const RunConfig& cfg = sim.config();
  Report r;
  r.profile = cfg.stack.profile.name;
  r.regime = std::string(to_string(cfg.stack.fs.regime));
  r.workload = std::string(to_string(cfg.workload.kind));
  r.sync_call = cfg.workload.kind == WorkloadKind::rand_write_buffered ? "none"
                : cfg.workload.kind == WorkloadKind::sqlite_persist   ? std::string(to_string(cfg.workload.sqlite_mode))
                                                                      : std::string(to_string(cfg.workload.sync_call));
  r.ops = sim.ops_done();
  r.seed = cfg.workload.seed;
  r.actors = cfg.workload.actors;
  r.queue_depth = cfg.stack.profile.device.queue_depth;

  // Background writeback does not count towards the application's makespan.
  const ActorId wb = s.fs.writeback_actor();
  std::unordered_map<RequestId, ActorId> issuer;
  for (const auto& is : s.block.issues()) issuer[is.id] = is.issuer;
  std::unordered_map<CommandId, const DispatchRecord*> by_cmd;
  for (const auto& d : s.block.dispatches()) by_cmd[d.cmd] = &d;
  SimTime end = sim.app_finish();
  for (const auto& c : s.device.completions()) {
    bool background = false;
    if (wb != kNoActor && c.kind == CommandKind::write) {
      auto it = by_cmd.find(c.cmd);
      if (it != by_cmd.end()) {
        background = true;
        for (RequestId id : it->second->constituents) {
          if (issuer[id] != wb) background = false;
        }
      }
    }
    if (!background) end = std::max(end, c.at);
  }
  r.makespan_us = static_cast<double>(end.us());
  r.iops = r.makespan_us > 0 ? static_cast<double>(r.ops) * 1e6 / r.makespan_us : 0;

  r.latency = latency_stats(sim.latencies());
  r.mean_qd = s.device.mean_queue_depth();
  r.max_qd = s.device.max_queue_depth();
  std::uint64_t switches = 0;
  for (ActorId a : sim.apps()) switches += s.engine.actor(a).voluntary_switches;
  r.switches_per_op = r.ops ? static_cast<double>(switches) / static_cast<double>(r.ops) : 0;
  const auto ci = commit_intervals(s.fs);
  r.commit_interval_us = ci.mean;
  r.commit_interval_samples = ci.samples;

  for (const auto& t : s.fs.transactions()) r.transactions += t.jc_block ? 1 : 0;
  r.flush_commands = s.device.flush_commands();
  r.barrier_commands = s.device.barrier_commands();
  r.conflicts = s.fs.conflicts_seen();
  for (const auto& d : s.block.dispatches()) r.retries += d.retries;
  r.events = s.engine.processed();
  r.trace_hash = s.engine.trace_hash();
  return r;
}

inline nlohmann::ordered_json to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["profile"] = r.profile;
  j["regime"] = r.regime;
  j["workload"] = r.workload;
  j["sync_call"] = r.sync_call;
  j["ops"] = r.ops;
  j["seed"] = r.seed;
  j["actors"] = r.actors;
  j["queue_depth"] = r.queue_depth;
  j["makespan_us"] = r.makespan_us;
  j["iops"] = r.iops;
  j["latency_us"] = {{"count", r.latency.count}, {"mean", r.latency.mean},   {"median", r.latency.median},
                     {"p99", r.latency.p99},     {"p99.9", r.latency.p999}, {"p99.99", r.latency.p9999},
                     {"max", r.latency.max}};
  j["mean_qd"] = r.mean_qd;
  j["max_qd"] = r.max_qd;
  j["switches_per_op"] = r.switches_per_op;
  j["commit_interval_us"] = r.commit_interval_us;
  j["commit_interval_samples"] = r.commit_interval_samples;
  j["transactions"] = r.transactions;
  j["flush_commands"] = r.flush_commands;
  j["barrier_commands"] = r.barrier_commands;
  j["conflicts"] = r.conflicts;
  j["retries"] = r.retries;
  j["events"] = r.events;
  j["trace_hash"] = r.trace_hash;
  return j;
}

inline std::string csv_header() {
  return "profile,regime,workload,sync_call,ops,seed,actors,queue_depth,makespan_us,iops,lat_mean_us,"
         "lat_median_us,lat_p99_us,lat_p999_us,lat_p9999_us,lat_max_us,mean_qd,max_qd,switches_per_op,"
         "commit_interval_us,commit_interval_samples,transactions,flush_commands,barrier_commands,conflicts,"
         "retries,events,trace_hash";
}

// Shortest text that reads back to the same double, as in the JSON output.
inline std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_row(const Report& r) {
  std::ostringstream os;
  const auto d = [](double v) { return shortest(v); };
  os << r.profile << ',' << r.regime << ',' << r.workload << ',' << r.sync_call << ',' << r.ops << ',' << r.seed
     << ',' << r.actors << ',' << r.queue_depth << ',' << d(r.makespan_us) << ',' << d(r.iops) << ',' << d(r.latency.mean)
     << ',' << d(r.latency.median) << ',' << d(r.latency.p99) << ',' << d(r.latency.p999) << ',' << d(r.latency.p9999) << ','
     << d(r.latency.max) << ',' << d(r.mean_qd) << ',' << r.max_qd << ',' << d(r.switches_per_op) << ','
     << d(r.commit_interval_us) << ',' << r.commit_interval_samples << ',' << r.transactions << ','
     << r.flush_commands << ',' << r.barrier_commands << ',' << r.conflicts << ',' << r.retries << ',' << r.events
     << ',' << r.trace_hash;
  return os.str();
}

inline void write_text(std::ostream& os, const Report& r) {
  auto ms = [](double us) { return us / 1000.0; };
  os << "profile      " << r.profile << "\n"
     << "regime       " << r.regime << "\n"
     << "workload     " << r.workload << " (" << r.sync_call << ", " << r.actors << " actor"
     << (r.actors == 1 ? "" : "s") << ")\n"
     << "ops          " << r.ops << " in " << ms(r.makespan_us) << " ms\n"
     << "iops         " << r.iops << "\n"
     << "latency ms   mean " << ms(r.latency.mean) << "  median " << ms(r.latency.median) << "  p99 "
     << ms(r.latency.p99) << "  p99.9 " << ms(r.latency.p999) << "  p99.99 " << ms(r.latency.p9999) << "\n"
     << "queue depth  mean " << r.mean_qd << "  max " << r.max_qd << " of " << r.queue_depth << "\n"
     << "switches/op  " << r.switches_per_op << "\n"
     << "commit gap   " << r.commit_interval_us << " us over " << r.commit_interval_samples << " samples\n"
     << "journal      " << r.transactions << " transactions, " << r.conflicts << " page conflicts\n"
     << "device       " << r.flush_commands << " flushes, " << r.barrier_commands << " barrier writes, "
     << r.retries << " queue-full retries\n"
     << "events       " << r.events << " (hash " << r.trace_hash << ")\n";
}

enum class ReportFormat { text, json, csv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::text;
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw std::invalid_argument("unknown report format '" + std::string(s) + "'");
}

inline void write_report(std::ostream& os, const std::vector<Report>& rs, ReportFormat f) {
  switch (f) {
    case ReportFormat::text:
      for (std::size_t i = 0; i < rs.size(); ++i) {
        if (i) os << "\n";
        write_text(os, rs[i]);
      }
      break;
    case ReportFormat::json: {
      if (rs.size() == 1) {
        os << to_json(rs[0]).dump(2) << "\n";
      } else {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : rs) arr.push_back(to_json(r));
        os << arr.dump(2) << "\n";
      }
      break;
    }
    case ReportFormat::csv:
      os << csv_header() << "\n";
      for (const auto& r : rs) os << csv_row(r) << "\n";
      break;
  }
}

inline void write_queue_series(std::ostream& os, const StorageDevice& dev) {
  os << "t_us,depth\n";
  for (const auto& q : dev.queue_series()) os << q.t.us() << ',' << q.depth << "\n";
}

// Engine events, dispatches, completions and syscalls as JSON Lines.
inline void write_trace(std::ostream& os, const IoStack& s) {
  s.engine.write_trace_jsonl(os);
  for (const auto& d : s.block.dispatches()) {
    nlohmann::ordered_json j;
    j["type"] = "dispatch";
    j["t"] = d.t.us();
    j["cmd"] = d.cmd;
    j["kind"] = d.kind == CommandKind::flush ? "flush" : "write";
    j["req"] = d.req;
    j["role"] = to_string(d.role);
    j["attrs"] = d.attrs.str();
    j["priority"] = to_string(d.priority);
    os << j.dump() << "\n";
  }
  for (const auto& c : s.device.completions()) {
    nlohmann::ordered_json j;
    j["type"] = "completion";
    j["t"] = c.at.us();
    j["cmd"] = c.cmd;
    j["kind"] = c.kind == CommandKind::flush ? "flush" : "write";
    j["barrier"] = c.barrier;
    os << j.dump() << "\n";
  }
  for (const auto& c : s.fs.syscalls()) {
    nlohmann::ordered_json j;
    j["type"] = "syscall";
    j["call"] = to_string(c.call);
    j["actor"] = s.engine.actor(c.actor).name;
    j["file"] = c.file;
    j["start"] = c.start.us();
    j["end"] = c.end.us();
    j["wakeups"] = c.wakeups;
    j["path"] = to_string(c.path);
    os << j.dump() << "\n";
  }
}

}  // namespace bsim
