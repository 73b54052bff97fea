#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "bsim/stack.hpp"

namespace bsim {

enum class WorkloadKind { rand_write_sync, rand_write_barrier, rand_write_buffered, dwsl, sqlite_persist, commit_stream };

inline std::string_view to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::rand_write_sync: return "rand_write_sync";
    case WorkloadKind::rand_write_barrier: return "rand_write_barrier";
    case WorkloadKind::rand_write_buffered: return "rand_write_buffered";
    case WorkloadKind::dwsl: return "dwsl";
    case WorkloadKind::sqlite_persist: return "sqlite_persist";
    case WorkloadKind::commit_stream: return "commit_stream";
  }
  return "?";
}

inline WorkloadKind parse_workload(std::string_view s) {
  for (auto k : {WorkloadKind::rand_write_sync, WorkloadKind::rand_write_barrier, WorkloadKind::rand_write_buffered,
                 WorkloadKind::dwsl, WorkloadKind::sqlite_persist, WorkloadKind::commit_stream}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown workload '" + std::string(s) + "'");
}

// baseline: 4 fdatasync; durable: 3 fdatabarrier + fdatasync; ordering: 4 fdatabarrier.
enum class SqliteMode { baseline, durable, ordering };

inline std::string_view to_string(SqliteMode m) {
  switch (m) {
    case SqliteMode::baseline: return "baseline";
    case SqliteMode::durable: return "durable";
    case SqliteMode::ordering: return "ordering";
  }
  return "?";
}

inline SqliteMode parse_sqlite_mode(std::string_view s) {
  if (s == "baseline") return SqliteMode::baseline;
  if (s == "durable") return SqliteMode::durable;
  if (s == "ordering") return SqliteMode::ordering;
  throw std::invalid_argument("unknown sqlite_mode '" + std::string(s) + "'");
}

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::rand_write_sync;
  std::uint64_t ops = 10'000;
  std::uint64_t block_range = 262'144;  // 1 GiB of 4 KB blocks
  std::uint64_t seed = 1;
  unsigned actors = 1;
  // rand_write_sync, dwsl and commit_stream: fsync | fdatasync | fbarrier | fdatabarrier.
  Syscall sync_call = Syscall::fsync;
  SqliteMode sqlite_mode = SqliteMode::baseline;

  void validate() const {
    if (ops < 1) throw std::invalid_argument("ops must be >= 1");
    if (actors < 1) throw std::invalid_argument("actors must be >= 1");
    if (block_range < 1) throw std::invalid_argument("block_range must be >= 1");
  }
};

inline Syscall parse_sync_call(std::string_view s) {
  for (auto c : {Syscall::fsync, Syscall::fdatasync, Syscall::fbarrier, Syscall::fdatabarrier}) {
    if (s == to_string(c)) return c;
  }
  throw std::invalid_argument("unknown sync_call '" + std::string(s) + "'");
}

inline Discipline parse_discipline(std::string_view s) {
  if (s == "fifo") return Discipline::fifo;
  if (s == "merge_fifo") return Discipline::merge_fifo;
  if (s == "random") return Discipline::random;
  throw std::invalid_argument("unknown discipline '" + std::string(s) + "'");
}

inline std::string_view to_string(Discipline d) {
  switch (d) {
    case Discipline::fifo: return "fifo";
    case Discipline::merge_fifo: return "merge_fifo";
    case Discipline::random: return "random";
  }
  return "?";
}

struct RunConfig {
  StackConfig stack;
  WorkloadSpec workload;

  // One seed drives the workload, the scheduler and the controller.
  void seed_all(std::uint64_t s) {
    workload.seed = s;
    stack.block.scheduler.seed = s;
    stack.profile.device.seed = s;
  }

  void validate() const {
    stack.profile.device.validate();
    workload.validate();
  }
};

namespace detail {

inline std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument("key '" + std::string(key) + "': expected a non-negative integer, got '" +
                                std::string(v) + "'");
  }
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("key '" + std::string(key) + "': expected a boolean, got '" + std::string(v) + "'");
}

}  // namespace detail

// A configurable key: INI section, name, and how to apply a value.
struct ConfigKey {
  std::string section;
  std::string name;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> apply;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::parse_bool;
  using detail::parse_u64;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto time_key = [&k](std::string sec, std::string name, std::string help, auto member) {
      k.push_back({sec, name, help, [name, member](RunConfig& c, std::string_view v) {
                     member(c) = SimTime(parse_u64(name, v));
                   }});
    };
    auto u64_key = [&k](std::string sec, std::string name, std::string help, auto member) {
      k.push_back({sec, name, help, [name, member](RunConfig& c, std::string_view v) {
                     member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_u64(name, v));
                   }});
    };
    auto bool_key = [&k](std::string sec, std::string name, std::string help, auto member) {
      k.push_back({sec, name, help, [name, member](RunConfig& c, std::string_view v) {
                     member(c) = parse_bool(name, v);
                   }});
    };

    // Loading a profile resets device and host; keep it first.
    k.push_back({"device", "profile", "shipped profile: ufs | plain-ssd | supercap-ssd",
                 [](RunConfig& c, std::string_view v) { c.stack.profile = profiles::by_name(v); }});
    u64_key("device", "queue_depth", "device command queue depth",
            [](RunConfig& c) -> std::size_t& { return c.stack.profile.device.queue_depth; });
    time_key("device", "t_transfer", "DMA time per 4 KB block (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.device.t_transfer; });
    time_key("device", "t_flush", "cache flush latency (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.device.t_flush; });
    time_key("device", "t_eps", "flush latency with power-loss protection (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.device.t_eps; });
    bool_key("device", "supercap", "writeback cache survives power loss",
             [](RunConfig& c) -> bool& { return c.stack.profile.device.supercap; });
    k.push_back({"device", "barrier_mode", "in_order_writeback | transactional | lfs_recovery",
                 [](RunConfig& c, std::string_view v) { c.stack.profile.device.barrier_mode = parse_barrier_mode(v); }});
    u64_key("device", "barrier_overhead_pct", "transfer slowdown while a barrier is queued",
            [](RunConfig& c) -> unsigned& { return c.stack.profile.device.barrier_overhead_pct; });
    u64_key("device", "segment_pages", "lfs_recovery segment size in blocks",
            [](RunConfig& c) -> std::size_t& { return c.stack.profile.device.segment_pages; });
    u64_key("device", "transactional_overhead_pct", "flush penalty in transactional mode",
            [](RunConfig& c) -> unsigned& { return c.stack.profile.device.transactional_overhead_pct; });
    time_key("device", "eviction_interval", "background cache write-back period (us, 0 = t_flush/8)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.device.eviction_interval; });
    bool_key("device", "ignore_barrier", "fault injection: persist without honouring barriers",
             [](RunConfig& c) -> bool& { return c.stack.profile.device.ignore_barrier; });

    time_key("host", "t_dispatch", "per-request dispatch cost (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.host.t_dispatch; });
    time_key("host", "t_context_switch", "wakeup latency (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.host.t_context_switch; });
    time_key("host", "t_write", "buffered write() cost (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.profile.host.t_write; });

    k.push_back({"block", "discipline", "fifo | merge_fifo | random",
                 [](RunConfig& c, std::string_view v) { c.stack.block.scheduler.discipline = parse_discipline(v); }});
    time_key("block", "retry_interval", "queue-full retry period (us)",
             [](RunConfig& c) -> SimTime& { return c.stack.block.retry_interval; });
    u64_key("block", "max_retries", "queue-full retries before a fault",
            [](RunConfig& c) -> unsigned& { return c.stack.block.max_retries; });
    bool_key("block", "restart_on_completion", "re-run dispatch on every device completion",
             [](RunConfig& c) -> bool& { return c.stack.block.restart_on_completion; });
    bool_key("block", "ordered_priority", "send barrier writes with ordered priority",
             [](RunConfig& c) -> bool& { return c.stack.block.ordered_priority; });
    bool_key("block", "epoch_blocking", "stop accepting ORDERED requests after a barrier",
             [](RunConfig& c) -> bool& { return c.stack.block.scheduler.epoch_blocking; });
    bool_key("block", "barrier_reassignment", "move the barrier to the epoch's last dispatch",
             [](RunConfig& c) -> bool& { return c.stack.block.scheduler.barrier_reassignment; });

    k.push_back({"fs", "regime", "EXT4_DR | EXT4_OD | BFS_DR | BFS_OD",
                 [](RunConfig& c, std::string_view v) { c.stack.fs.regime = parse_regime(v); }});
    time_key("fs", "timer_tick", "mtime granularity (us)", [](RunConfig& c) -> SimTime& { return c.stack.fs.timer_tick; });
    time_key("fs", "writeback_period", "background writeback period (us, 0 = off)",
             [](RunConfig& c) -> SimTime& { return c.stack.fs.writeback_period; });
    bool_key("fs", "flush_before_commit", "EXT4_DR commit block carries FLUSH",
             [](RunConfig& c) -> bool& { return c.stack.fs.flush_before_commit; });

    k.push_back({"workload", "workload", "rand_write_sync | rand_write_barrier | rand_write_buffered | dwsl | "
                                         "sqlite_persist | commit_stream",
                 [](RunConfig& c, std::string_view v) { c.workload.kind = parse_workload(v); }});
    u64_key("workload", "ops", "operations (transactions for sqlite_persist)",
            [](RunConfig& c) -> std::uint64_t& { return c.workload.ops; });
    u64_key("workload", "block_range", "random offsets are drawn from [0, block_range)",
            [](RunConfig& c) -> std::uint64_t& { return c.workload.block_range; });
    k.push_back({"workload", "seed", "seed for workload, scheduler and controller",
                 [](RunConfig& c, std::string_view v) { c.seed_all(parse_u64("seed", v)); }});
    u64_key("workload", "actors", "application actors", [](RunConfig& c) -> unsigned& { return c.workload.actors; });
    k.push_back({"workload", "sync_call", "fsync | fdatasync | fbarrier | fdatabarrier",
                 [](RunConfig& c, std::string_view v) { c.workload.sync_call = parse_sync_call(v); }});
    k.push_back({"workload", "sqlite_mode", "baseline | durable | ordering",
                 [](RunConfig& c, std::string_view v) { c.workload.sqlite_mode = parse_sqlite_mode(v); }});
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

// Ordered (key, value) assignments; later ones win.
using Assignments = std::vector<std::pair<std::string, std::string>>;

inline void apply(RunConfig& c, const Assignments& as) {
  // The profile key replaces device and host wholesale, so it goes first.
  for (const auto& [k, v] : as) {
    if (k == "profile") find_key(k)->apply(c, v);
  }
  for (const auto& [k, v] : as) {
    if (k == "profile") continue;
    const ConfigKey* key = find_key(k);
    if (!key) throw std::invalid_argument("unknown config key '" + k + "'");
    key->apply(c, v);
  }
}

// Flat key=value with [section] headers. Keys must sit in their own section.
inline Assignments read_ini(std::istream& in, const std::string& origin = "config") {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(origin + ": " + e.message() + " at line " + std::to_string(e.line()));
  }
  Assignments out;
  for (const auto& [section, body] : pt) {
    if (body.empty()) throw std::invalid_argument(origin + ": key '" + section + "' outside a section");
    for (const auto& [name, value] : body) {
      const ConfigKey* key = find_key(name);
      if (!key) throw std::invalid_argument(origin + ": unknown key '" + name + "' in [" + section + "]");
      if (key->section != section) {
        throw std::invalid_argument(origin + ": key '" + name + "' belongs in [" + key->section + "], not [" +
                                    section + "]");
      }
      out.emplace_back(name, value.get_value<std::string>());
    }
  }
  return out;
}

inline Assignments read_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  return read_ini(in, path);
}

// Every key with its current value, as an INI document.
inline std::string to_ini(const RunConfig& c) {
  const auto& d = c.stack.profile.device;
  const auto& h = c.stack.profile.host;
  const auto& b = c.stack.block;
  const auto& f = c.stack.fs;
  const auto& w = c.workload;
  auto yn = [](bool v) { return v ? "true" : "false"; };
  std::string s;
  s += "[device]\nprofile=" + c.stack.profile.name + "\n";
  s += "queue_depth=" + std::to_string(d.queue_depth) + "\n";
  s += "t_transfer=" + std::to_string(d.t_transfer.us()) + "\n";
  s += "t_flush=" + std::to_string(d.t_flush.us()) + "\n";
  s += "t_eps=" + std::to_string(d.t_eps.us()) + "\n";
  s += std::string("supercap=") + yn(d.supercap) + "\n";
  s += "barrier_mode=" + std::string(to_string(d.barrier_mode)) + "\n";
  s += "barrier_overhead_pct=" + std::to_string(d.barrier_overhead_pct) + "\n";
  s += "segment_pages=" + std::to_string(d.segment_pages) + "\n";
  s += "transactional_overhead_pct=" + std::to_string(d.transactional_overhead_pct) + "\n";
  s += "eviction_interval=" + std::to_string(d.eviction_interval.us()) + "\n";
  s += std::string("ignore_barrier=") + yn(d.ignore_barrier) + "\n";
  s += "\n[host]\nt_dispatch=" + std::to_string(h.t_dispatch.us()) + "\n";
  s += "t_context_switch=" + std::to_string(h.t_context_switch.us()) + "\n";
  s += "t_write=" + std::to_string(h.t_write.us()) + "\n";
  s += "\n[block]\ndiscipline=" + std::string(to_string(b.scheduler.discipline)) + "\n";
  s += "retry_interval=" + std::to_string(b.retry_interval.us()) + "\n";
  s += "max_retries=" + std::to_string(b.max_retries) + "\n";
  s += std::string("restart_on_completion=") + yn(b.restart_on_completion) + "\n";
  s += std::string("ordered_priority=") + yn(b.ordered_priority) + "\n";
  s += std::string("epoch_blocking=") + yn(b.scheduler.epoch_blocking) + "\n";
  s += std::string("barrier_reassignment=") + yn(b.scheduler.barrier_reassignment) + "\n";
  s += "\n[fs]\nregime=" + std::string(to_string(f.regime)) + "\n";
  s += "timer_tick=" + std::to_string(f.timer_tick.us()) + "\n";
  s += "writeback_period=" + std::to_string(f.writeback_period.us()) + "\n";
  s += std::string("flush_before_commit=") + yn(f.flush_before_commit) + "\n";
  s += "\n[workload]\nworkload=" + std::string(to_string(w.kind)) + "\n";
  s += "ops=" + std::to_string(w.ops) + "\n";
  s += "block_range=" + std::to_string(w.block_range) + "\n";
  s += "seed=" + std::to_string(w.seed) + "\n";
  s += "actors=" + std::to_string(w.actors) + "\n";
  s += "sync_call=" + std::string(to_string(w.sync_call)) + "\n";
  s += "sqlite_mode=" + std::string(to_string(w.sqlite_mode)) + "\n";
  return s;
}

}  // namespace bsim
