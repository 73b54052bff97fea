#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bsim/check/oracle.hpp"
#include "bsim/harness/crash_suite.hpp"
#include "bsim/harness/report.hpp"
#include "bsim/harness/workload.hpp"

namespace bsim {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

namespace accept {

inline RunConfig config(const std::string& profile, Regime regime, WorkloadKind kind, Syscall call, std::uint64_t ops,
                        unsigned actors = 1) {
  RunConfig c;
  c.stack.profile = profiles::by_name(profile);
  c.stack.fs.regime = regime;
  c.workload.kind = kind;
  c.workload.sync_call = call;
  c.workload.ops = ops;
  c.workload.actors = actors;
  return c;
}

struct Run {
  std::unique_ptr<Simulation> sim;
  Report report;
};

inline Run run(RunConfig c) {
  Run r{std::make_unique<Simulation>(std::move(c)), {}};
  r.sim->run();
  r.report = summarize(*r.sim);
  return r;
}

inline std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

inline bool within(double measured, double expected, double tol) {
  return std::fabs(measured - expected) <= tol * expected;
}

// Sync-call records issued by application actors.
inline std::vector<const SyscallRecord*> app_calls(const Simulation& s, Syscall c) {
  std::vector<const SyscallRecord*> out;
  for (const auto& r : s.stack().fs.syscalls()) {
    if (r.call != c) continue;
    for (ActorId a : s.apps()) {
      if (r.actor == a) out.push_back(&r);
    }
  }
  return out;
}

inline OrderTrace synthetic_trace(const std::vector<std::size_t>& epoch_sizes, std::size_t orderless) {
  OrderTrace t;
  std::uint64_t addr = 0;
  for (std::size_t e = 0; e < epoch_sizes.size(); ++e) {
    t.epochs.emplace_back();
    for (std::size_t i = 0; i < epoch_sizes[e]; ++i) {
      BlockWrite w{BlockAddr{addr++}, 1};
      t.epochs.back().push_back(w);
      t.epoch_of[w] = static_cast<EpochId>(e);
    }
  }
  for (std::size_t i = 0; i < orderless; ++i) t.orderless.insert(BlockWrite{BlockAddr{addr++}, 1});
  return t;
}

}  // namespace accept

// Shared runs are cached so criteria that read the same configuration do
// not simulate it twice.
class AcceptanceSuite {
 public:
  std::vector<CriterionResult> run_all(std::ostream* live = nullptr) {
    std::vector<CriterionResult> out;
    const std::vector<std::function<CriterionResult()>> criteria{
        [this] { return throughput(); },    [this] { return queue_depth(); },  [this] { return fsync_latency(); },
        [this] { return switches(); },      [this] { return commit_gap(); },   [this] { return fsync_qd(); },
        [this] { return crash_safety(); },  [this] { return mutations(); },    [this] { return sqlite(); },
        [this] { return oracle_self(); }};
    for (const auto& c : criteria) {
      const auto t0 = std::chrono::steady_clock::now();
      CriterionResult r;
      try {
        r = c();
      } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("fault: ") + e.what();
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (live) *live << format(r) << std::endl;
      out.push_back(std::move(r));
    }
    return out;
  }

  static std::string format(const CriterionResult& r) {
    return std::string(r.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(r.id) + " " + r.name + ": " +
           r.detail + " (" + accept::fmt(r.seconds, 2) + " s)";
  }

  static constexpr std::uint64_t kThroughputOps = 100'000;
  static constexpr std::uint64_t kLatencyOps = 10'000;

  CriterionResult throughput() {
    CriterionResult r{1, "throughput ordering", true, "", 0};
    for (const auto& p : kProfiles) {
      const auto& x = wait_on_transfer(p).report;
      const auto& b = barrier(p).report;
      const auto& buf = buffered(p).report;
      const double ratio = b.iops / x.iops;
      const bool ok = ratio >= 2.0 && buf.iops >= b.iops && b.iops > x.iops;
      r.pass = r.pass && ok;
      r.detail += p + " B/X=" + accept::fmt(ratio, 2) + " P=" + accept::fmt(buf.iops, 0) + " B=" +
                  accept::fmt(b.iops, 0) + " X=" + accept::fmt(x.iops, 0) + "; ";
    }
    r.detail += "need B/X>=2.0 and P>=B";
    return r;
  }

  CriterionResult queue_depth() {
    CriterionResult r{2, "queue depth", true, "", 0};
    for (const auto& p : kProfiles) {
      const auto& x = wait_on_transfer(p).report;
      r.pass = r.pass && x.max_qd == 1;
      r.detail += p + " X max=" + std::to_string(x.max_qd);
      if (p != "supercap-ssd") {
        const auto& b = barrier(p).report;
        const double need = 0.8 * static_cast<double>(b.queue_depth);
        r.pass = r.pass && b.mean_qd >= need;
        r.detail += " B mean=" + accept::fmt(b.mean_qd, 2) + "/" + std::to_string(b.queue_depth);
      }
      r.detail += "; ";
    }
    r.detail += "need X max=1, B mean>=0.8*QD on ufs and plain-ssd";
    return r;
  }

  CriterionResult fsync_latency() {
    const auto& e = sync_run("plain-ssd", Regime::ext4_dr).report;
    const auto& b = sync_run("plain-ssd", Regime::bfs_dr).report;
    const double ratio = b.latency.mean / e.latency.mean;
    return {3, "fsync latency ratio", ratio >= 0.45 && ratio <= 0.75,
            "plain-ssd BFS_DR " + accept::fmt(b.latency.mean / 1000) + " ms / EXT4_DR " +
                accept::fmt(e.latency.mean / 1000) + " ms = " + accept::fmt(ratio) + ", need [0.45, 0.75]",
            0};
  }

  CriterionResult switches() {
    CriterionResult r{4, "context switches", true, "", 0};
    auto count = [](const std::vector<const SyscallRecord*>& calls, auto pred) {
      std::size_t n = 0;
      for (const auto* c : calls) n += pred(*c) ? 1 : 0;
      return n;
    };
    const auto ext4 = accept::app_calls(*sync_run("plain-ssd", Regime::ext4_dr).sim, Syscall::fsync);
    const auto bfs = accept::app_calls(*sync_run("plain-ssd", Regime::bfs_dr).sim, Syscall::fsync);
    const auto bar = accept::app_calls(*barrier("ufs").sim, Syscall::fdatabarrier);
    const std::size_t ext4_two = count(ext4, [](const SyscallRecord& c) { return c.wakeups == 2; });
    const std::size_t bfs_ok = count(bfs, [](const SyscallRecord& c) { return c.wakeups == 1 || c.wakeups == 2; });
    const std::size_t bfs_journal = count(bfs, [](const SyscallRecord& c) { return c.path == SyncPath::journal; });
    const std::size_t bfs_journal_one =
        count(bfs, [](const SyscallRecord& c) { return c.path == SyncPath::journal && c.wakeups == 1; });
    const std::size_t bar_zero = count(bar, [](const SyscallRecord& c) { return c.wakeups == 0; });
    r.pass = !ext4.empty() && ext4_two == ext4.size() && bfs_ok == bfs.size() && bfs_journal > 0 &&
             bfs_journal_one == bfs_journal && !bar.empty() && bar_zero == bar.size();
    r.detail = "EXT4_DR fsync with 2 wakeups " + std::to_string(ext4_two) + "/" + std::to_string(ext4.size()) +
               "; BFS_DR fsync in {1,2} " + std::to_string(bfs_ok) + "/" + std::to_string(bfs.size()) +
               ", journal path with 1 " + std::to_string(bfs_journal_one) + "/" + std::to_string(bfs_journal) +
               "; BFS_OD fdatabarrier with 0 " + std::to_string(bar_zero) + "/" + std::to_string(bar.size());
    return r;
  }

  // Expected gaps use host-observed latencies: a transfer or flush is seen
  // by the journal thread one wakeup after the device finishes it.
  CriterionResult commit_gap() {
    CriterionResult r{5, "commit interval", true, "", 0};
    auto check = [&](const std::string& profile, Regime regime, Syscall call, double expected, const std::string& what) {
      auto c = accept::config(profile, regime, WorkloadKind::commit_stream, call, 4000, 8);
      const auto res = accept::run(c);
      const auto& rep = res.report;
      const bool ok = rep.commit_interval_samples >= 100 && accept::within(rep.commit_interval_us, expected, 0.10);
      r.pass = r.pass && ok;
      r.detail += profile + " " + std::string(to_string(regime)) + " " + accept::fmt(rep.commit_interval_us, 1) +
                  " us vs " + what + "=" + accept::fmt(expected, 0) + " (n=" + std::to_string(rep.commit_interval_samples) +
                  "); ";
    };
    for (const auto& p : kProfiles) {
      const Profile prof = profiles::by_name(p);
      const double t_d = static_cast<double>(prof.host.t_dispatch.us());
      const double t_c = static_cast<double>(prof.device.t_transfer.us() + prof.host.t_context_switch.us());
      check(p, Regime::bfs_od, Syscall::fbarrier, t_d, "t_D");
      check(p, Regime::ext4_od, Syscall::fsync, t_d + t_c, "t_D+t_C");
    }
    const Profile sc = profiles::supercap_ssd();
    const double t_d = static_cast<double>(sc.host.t_dispatch.us());
    const double t_c = static_cast<double>(sc.device.t_transfer.us());
    // Pre-flush and FUA write-through of JC, then the wakeup.
    const double t_e = static_cast<double>(2 * sc.device.t_eps.us() + sc.host.t_context_switch.us());
    check("supercap-ssd", Regime::ext4_dr, Syscall::fsync, t_d + t_c + t_e, "t_D+t_C+t_eps");
    r.detail += "tolerance 10%";
    return r;
  }

  CriterionResult fsync_qd() {
    const auto& rep = sync_run("ufs", Regime::bfs_dr).report;
    return {6, "fsync queue depth", rep.max_qd == 2,
            "ufs BFS_DR fsync max QD " + std::to_string(rep.max_qd) + ", need 2", 0};
  }

  CriterionResult crash_safety() {
    const SuiteResult s = run_crash_suite(Mutation::none);
    const auto& t = s.total;
    const bool ok = t.ok() && t.conjunction() && t.issue_persist && t.states_checked > 0;
    std::size_t raw = 0;
    for (const auto& c : s.cases) raw += c.name == "raw" ? 1 : 0;
    return {7, "crash safety", ok,
            std::to_string(s.cases.size()) + " traces (" + std::to_string(raw) + " raw block, " +
                std::to_string(s.cases.size() - raw) + " journaling) over 3 barrier modes, " +
                std::to_string(t.states_checked) + " crash states, " + std::to_string(t.violation_count) +
                " violations; I=D " + yn(t.issue_dispatch) + " D=C " + yn(t.dispatch_transfer) + " C=P " +
                yn(t.transfer_persist) + " I=P " + yn(t.issue_persist),
            0};
  }

  CriterionResult mutations() {
    CriterionResult r{8, "mutation sensitivity", true, "", 0};
    for (Mutation m : {Mutation::ordered_priority, Mutation::epoch_blocking, Mutation::barrier_reassignment,
                       Mutation::flush_before_commit}) {
      const SuiteResult s = run_crash_suite(m);
      r.pass = r.pass && s.total.violation_count > 0;
      r.detail += std::string(to_string(m)) + " off: " + std::to_string(s.total.violation_count) + " violations; ";
    }
    r.detail += "need >=1 each";
    return r;
  }

  CriterionResult sqlite() {
    auto go = [](Regime regime, SqliteMode m) {
      auto c = accept::config("ufs", regime, WorkloadKind::sqlite_persist, Syscall::fdatasync, 2000);
      c.workload.sqlite_mode = m;
      return accept::run(c);
    };
    const auto base = go(Regime::ext4_dr, SqliteMode::baseline);
    const auto dur = go(Regime::bfs_dr, SqliteMode::durable);
    const auto ord = go(Regime::bfs_od, SqliteMode::ordering);
    const double d = dur.report.iops / base.report.iops;
    const double o = ord.report.iops / base.report.iops;
    auto per_tx = [](const accept::Run& x) {
      return static_cast<double>(x.report.flush_commands) / static_cast<double>(x.report.ops);
    };
    const bool flushes = per_tx(base) == 4.0 && per_tx(dur) == 1.0 && per_tx(ord) == 0.0;
    return {9, "sqlite pattern", d >= 1.7 * 0.9 && o >= 2.8 * 0.9 && flushes,
            "ufs durable/baseline " + accept::fmt(d, 2) + "x (need >=1.53), ordering/baseline " + accept::fmt(o, 2) +
                "x (need >=2.52); flushes per tx " + accept::fmt(per_tx(base), 1) + "/" + accept::fmt(per_tx(dur), 1) +
                "/" + accept::fmt(per_tx(ord), 1) + " (need 4/1/0)",
            0};
  }

  CriterionResult oracle_self() {
    const std::vector<std::pair<std::vector<std::size_t>, std::size_t>> shapes{
        {{3, 3}, 2}, {{1, 2, 3, 2}, 0}, {{2, 2}, 4}};
    std::size_t agree = 0;
    std::size_t total = 0;
    std::size_t legal = 0;
    bool counts_match = true;
    for (const auto& [sizes, orderless] : shapes) {
      const OrderTrace t = accept::synthetic_trace(sizes, orderless);
      std::vector<BlockWrite> all;
      for (const auto& e : t.epochs) all.insert(all.end(), e.begin(), e.end());
      all.insert(all.end(), t.orderless.begin(), t.orderless.end());
      const LegalitySet ls(t);
      std::size_t legal_here = 0;
      for (std::uint32_t m = 0; m < (1u << all.size()); ++m) {
        std::vector<BlockWrite> cand;
        for (std::size_t i = 0; i < all.size(); ++i) {
          if (m >> i & 1u) cand.push_back(all[i]);
        }
        const bool a = oracle_legal(t, cand);
        const bool b = oracle_legal_scan(t.epochs, cand);
        agree += a == b && a == ls.contains(cand) ? 1 : 0;
        legal_here += a ? 1 : 0;
        ++total;
      }
      counts_match = counts_match && legal_here == ls.count() && ls.enumerate().size() == ls.count();
      legal += legal_here;
    }
    return {10, "oracle self-check", agree == total && counts_match,
            std::to_string(agree) + "/" + std::to_string(total) + " subsets agree across 3 traces of 8 blocks, " +
                std::to_string(legal) + " legal; closed-form counts " + (counts_match ? "match" : "differ"),
            0};
  }

 private:
  static std::string yn(bool v) { return v ? "holds" : "broken"; }

  const accept::Run& cached(const std::string& key, const std::function<RunConfig()>& make) {
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, accept::run(make())).first;
    return it->second;
  }

  const accept::Run& wait_on_transfer(const std::string& p) {
    return cached("X/" + p, [&] {
      return accept::config(p, Regime::ext4_od, WorkloadKind::rand_write_sync, Syscall::fdatasync, kThroughputOps);
    });
  }
  const accept::Run& barrier(const std::string& p) {
    return cached("B/" + p, [&] {
      return accept::config(p, Regime::bfs_od, WorkloadKind::rand_write_barrier, Syscall::fdatabarrier, kThroughputOps);
    });
  }
  const accept::Run& buffered(const std::string& p) {
    return cached("P/" + p, [&] {
      return accept::config(p, Regime::bfs_od, WorkloadKind::rand_write_buffered, Syscall::fsync, kThroughputOps);
    });
  }
  const accept::Run& sync_run(const std::string& p, Regime regime) {
    return cached("S/" + p + "/" + std::string(to_string(regime)), [&] {
      return accept::config(p, regime, WorkloadKind::rand_write_sync, Syscall::fsync, kLatencyOps);
    });
  }

  inline static const std::vector<std::string> kProfiles{"ufs", "plain-ssd", "supercap-ssd"};
  std::map<std::string, accept::Run> cache_;
};

}  // namespace bsim
