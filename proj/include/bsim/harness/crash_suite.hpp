#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bsim/check/crash_checker.hpp"
#include "bsim/harness/config.hpp"
#include "bsim/harness/workload.hpp"

namespace bsim {

// Switches that each disable one ordering mechanism.
enum class Mutation { none, ordered_priority, epoch_blocking, barrier_reassignment, flush_before_commit };

inline std::string_view to_string(Mutation m) {
  switch (m) {
    case Mutation::none: return "none";
    case Mutation::ordered_priority: return "ordered_priority";
    case Mutation::epoch_blocking: return "epoch_blocking";
    case Mutation::barrier_reassignment: return "barrier_reassignment";
    case Mutation::flush_before_commit: return "flush_before_commit";
  }
  return "?";
}

inline Mutation parse_mutation(std::string_view s) {
  for (auto m : {Mutation::none, Mutation::ordered_priority, Mutation::epoch_blocking, Mutation::barrier_reassignment,
                 Mutation::flush_before_commit}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mutation '" + std::string(s) + "'");
}

inline void apply_mutation(StackConfig& c, Mutation m) {
  switch (m) {
    case Mutation::none: break;
    case Mutation::ordered_priority: c.block.ordered_priority = false; break;
    case Mutation::epoch_blocking: c.block.scheduler.epoch_blocking = false; break;
    case Mutation::barrier_reassignment: c.block.scheduler.barrier_reassignment = false; break;
    case Mutation::flush_before_commit: c.fs.flush_before_commit = false; break;
  }
}

struct RawOp {
  SimTime at;
  WriteRequest req;
};

struct RawTrace {
  std::vector<RawOp> ops;
  std::size_t epochs = 0;
  std::size_t ordered_blocks = 0;
  std::size_t orderless_blocks = 0;
};

// 2 to 4 epochs of 2 or 3 ORDERED blocks, up to 4 orderless blocks, submitted in bursts.
inline RawTrace make_raw_trace(std::uint64_t seed, SimTime t_transfer) {
  std::mt19937_64 rng(seed);
  RawTrace t;
  std::uint64_t next_addr = 100;
  auto block = [&] { return BlockWrite{BlockAddr{next_addr += 2}, 1}; };

  std::vector<WriteRequest> reqs;
  t.epochs = 2 + rng() % 3;
  for (std::size_t e = 0; e < t.epochs; ++e) {
    std::size_t n = 2 + rng() % 2;
    while (n > 0) {
      WriteRequest r;
      r.attrs = Attr::ordered;
      const std::size_t k = std::min<std::size_t>(n, rng() % 4 == 0 ? 2 : 1);
      for (std::size_t i = 0; i < k; ++i) r.blocks.push_back(block());
      t.ordered_blocks += k;
      n -= k;
      reqs.push_back(std::move(r));
    }
    // The final epoch is left open half the time.
    if (e + 1 < t.epochs || rng() % 2) reqs.back().attrs.set(Attr::barrier);
  }
  t.orderless_blocks = rng() % 5;
  for (std::size_t i = 0; i < t.orderless_blocks; ++i) {
    WriteRequest r;
    r.blocks.push_back(block());
    const auto pos = static_cast<std::ptrdiff_t>(rng() % (reqs.size() + 1));
    reqs.insert(reqs.begin() + pos, std::move(r));
  }

  SimTime at{0};
  for (auto& r : reqs) {
    if (rng() % 4 == 0) at += SimTime(1 + rng() % (2 * t_transfer.us()));
    r.role = r.ordered() ? Role::data : Role::orderless;
    t.ops.push_back(RawOp{at, std::move(r)});
  }
  return t;
}

struct SuiteCase {
  std::string name;
  BarrierMode mode;
  std::uint64_t seed;
  CheckReport report;
};

struct SuiteResult {
  std::vector<SuiteCase> cases;
  CheckReport total;

  // A violation, or a broken order conjunct.
  bool detected() const { return total.violation_count > 0 || !total.conjunction() || !total.issue_persist; }
};

inline StackConfig suite_stack(BarrierMode mode, std::uint64_t seed, Mutation m) {
  StackConfig c;
  c.profile = profiles::ufs();
  c.profile.device.barrier_mode = mode;
  // A shallow device queue backs requests up in the scheduler, and a slow
  // eviction tick leaves blocks volatile across journal commits.
  c.profile.device.queue_depth = 1 + seed % 3;
  c.profile.device.segment_pages = 4;
  c.profile.device.eviction_interval = SimTime::millis(1);
  c.profile.device.seed = seed;
  c.block.scheduler.discipline = Discipline::random;
  c.block.scheduler.seed = seed;
  c.fs.record_contracts = true;
  apply_mutation(c, m);
  return c;
}

inline CheckReport run_raw_case(const RawTrace& trace, const StackConfig& cfg, const CheckOptions& opt) {
  IoStack s(cfg);
  CrashRecorder rec(s);
  const ActorId app = s.engine.add_actor("raw");
  auto body = [](IoStack& st, ActorId me, const RawTrace& t) -> Task<void> {
    for (const auto& op : t.ops) {
      if (st.engine.now() < op.at) co_await st.engine.delay(me, op.at - st.engine.now(), "burst-gap");
      WriteRequest r = op.req;
      r.issuer = me;
      st.block.submit(std::move(r));
    }
  };
  s.engine.start(app, body(s, app, trace));
  s.engine.run();
  return verify(s, rec, opt);
}

// Small journaling workload: per actor, allocating writes separated by
// ordering calls and closed by a durability call.
inline CheckReport run_journal_case(Regime regime, const StackConfig& base, const CheckOptions& opt) {
  StackConfig cfg = base;
  cfg.fs.regime = regime;
  IoStack s(cfg);
  CrashRecorder rec(s);
  const FileId f0 = s.fs.create_file(0);
  const FileId f1 = s.fs.create_file(0);
  s.fs.start();
  auto ordering = is_bfs(regime) ? Syscall::fdatabarrier : Syscall::fdatasync;
  std::size_t done = 0;
  auto body = [](IoStack& st, ActorId me, FileId f, Syscall ord, std::size_t& finished) -> Task<void> {
    co_await st.fs.write(me, f, 0, 1);
    co_await sync_call(st.fs, me, f, ord);
    co_await st.fs.write(me, f, 1, 2);
    co_await sync_call(st.fs, me, f, ord);
    co_await st.fs.write(me, f, 0, 1);
    co_await st.fs.fsync(me, f);
    co_await st.fs.write(me, f, 3, 1);
    co_await st.fs.fsync(me, f);
    if (++finished == 2) st.fs.shutdown();
  };
  const ActorId a = s.engine.add_actor("app0");
  const ActorId b = s.engine.add_actor("app1");
  s.engine.start(a, body(s, a, f0, ordering, done));
  s.engine.start(b, body(s, b, f1, ordering, done));
  s.engine.run();
  if (done != 2) throw SimulationFault("journal crash workload did not finish");
  return verify(s, rec, opt);
}

inline const std::vector<BarrierMode>& all_barrier_modes() {
  static const std::vector<BarrierMode> m{BarrierMode::in_order_writeback, BarrierMode::transactional,
                                          BarrierMode::lfs_recovery};
  return m;
}

// Journaling regimes that promise crash consistency. EXT4_OD issues no
// flush and makes no such promise.
inline const std::vector<Regime>& checked_regimes() {
  static const std::vector<Regime> r{Regime::ext4_dr, Regime::bfs_dr, Regime::bfs_od};
  return r;
}

// Raw block traces and journaling workloads across every barrier mode.
inline SuiteResult run_crash_suite(Mutation m = Mutation::none, std::uint64_t seeds = 10,
                                   CheckOptions opt = CheckOptions{}) {
  SuiteResult out;
  for (BarrierMode mode : all_barrier_modes()) {
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
      const StackConfig cfg = suite_stack(mode, seed, m);
      const RawTrace trace = make_raw_trace(seed, cfg.profile.device.t_transfer);
      SuiteCase c{"raw", mode, seed, run_raw_case(trace, cfg, opt)};
      out.total.merge(c.report);
      out.cases.push_back(std::move(c));
    }
    for (Regime r : checked_regimes()) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SuiteCase c{std::string(to_string(r)), mode, seed, run_journal_case(r, suite_stack(mode, seed, m), opt)};
        out.total.merge(c.report);
        out.cases.push_back(std::move(c));
      }
    }
  }
  return out;
}

}  // namespace bsim
