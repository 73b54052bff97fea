#include <gtest/gtest.h>

#include <vector>

#include "bsim/harness/report.hpp"
#include "bsim/harness/workload.hpp"
#include "bsim/stack.hpp"

using namespace bsim;
using namespace bsim::literals;

namespace {

StackConfig stack_for(Regime r, Profile p = profiles::ufs()) {
  StackConfig c;
  c.profile = p;
  c.fs.regime = r;
  return c;
}

// One allocating append followed by one call, on a fresh stack.
SyscallRecord single_call(Regime regime, Syscall call) {
  IoStack s(stack_for(regime));
  const FileId f = s.fs.create_file(0);
  s.fs.start();
  const ActorId app = s.engine.add_actor("app");
  auto body = [](IoStack& st, ActorId me, FileId f, Syscall c) -> Task<void> {
    co_await st.fs.write(me, f, 0, 1);
    co_await sync_call(st.fs, me, f, c);
    st.fs.shutdown();
  };
  s.engine.start(app, body(s, app, f, call));
  s.engine.run();
  EXPECT_TRUE(s.engine.deadlock_report().empty());
  for (const auto& r : s.fs.syscalls()) {
    if (r.call == call) return r;
  }
  ADD_FAILURE() << "call not recorded";
  return {};
}

RunConfig workload(Regime r, WorkloadKind k, Syscall call, std::uint64_t ops, unsigned actors = 1) {
  RunConfig c;
  c.stack = stack_for(r);
  c.workload.kind = k;
  c.workload.sync_call = call;
  c.workload.ops = ops;
  c.workload.actors = actors;
  return c;
}

}  // namespace

TEST(Wakeups, Ext4FsyncSleepsTwice) {
  const auto r = single_call(Regime::ext4_dr, Syscall::fsync);
  EXPECT_EQ(r.path, SyncPath::journal);
  EXPECT_EQ(r.wakeups, 2u);
}

TEST(Wakeups, BfsFsyncOnJournalPathSleepsOnce) {
  const auto r = single_call(Regime::bfs_dr, Syscall::fsync);
  EXPECT_EQ(r.path, SyncPath::journal);
  EXPECT_EQ(r.wakeups, 1u);
}

TEST(Wakeups, FdatabarrierNeverSleeps) {
  const auto r = single_call(Regime::bfs_od, Syscall::fdatabarrier);
  EXPECT_EQ(r.wakeups, 0u);
  EXPECT_EQ(r.path, SyncPath::data);
  // Returns once the data run is dispatched.
  EXPECT_EQ((r.end - r.start).us(), profiles::ufs().host.t_dispatch.us());
}

TEST(Wakeups, FbarrierWaitsForCommitDispatchOnly) {
  const auto r = single_call(Regime::bfs_od, Syscall::fbarrier);
  EXPECT_EQ(r.path, SyncPath::journal);
  EXPECT_EQ(r.wakeups, 1u);
  const auto f = single_call(Regime::bfs_dr, Syscall::fsync);
  EXPECT_LT(r.end - r.start, f.end - f.start);
}

TEST(Syscalls, BarrierCallsNeedBarrierFs) {
  EXPECT_THROW(single_call(Regime::ext4_dr, Syscall::fdatabarrier), std::invalid_argument);
  EXPECT_THROW(single_call(Regime::ext4_od, Syscall::fbarrier), std::invalid_argument);
}

TEST(Syscalls, CleanFdatasyncOnBfsForcesCommit) {
  IoStack s(stack_for(Regime::bfs_dr));
  const FileId f = s.fs.create_file(4);
  s.fs.start();
  const ActorId app = s.engine.add_actor("app");
  auto body = [](IoStack& st, ActorId me, FileId f) -> Task<void> {
    co_await st.fs.fdatasync(me, f);
    st.fs.shutdown();
  };
  s.engine.start(app, body(s, app, f));
  s.engine.run();
  const auto& rec = s.fs.syscalls().back();
  EXPECT_EQ(rec.path, SyncPath::forced);
  ASSERT_TRUE(rec.txn);
  EXPECT_EQ(s.fs.transactions().at(*rec.txn).state, TxnState::durable);
}

TEST(Journal, PageConflictParksWriterUntilCommitIsDurable) {
  StackConfig cfg = stack_for(Regime::bfs_od);
  cfg.fs.timer_tick = SimTime(0);  // every write dirties the inode
  IoStack s(cfg);
  const FileId f = s.fs.create_file(0);
  s.fs.start();
  const ActorId app = s.engine.add_actor("app");
  auto body = [](IoStack& st, ActorId me, FileId f) -> Task<void> {
    for (std::uint64_t i = 0; i < 20; ++i) {
      co_await st.fs.write(me, f, i, 1);
      co_await st.fs.fbarrier(me, f);
    }
    co_await st.fs.fsync(me, f);
    st.fs.shutdown();
  };
  s.engine.start(app, body(s, app, f));
  s.engine.run();
  EXPECT_TRUE(s.engine.deadlock_report().empty());
  EXPECT_GT(s.fs.conflicts_seen(), 0u);
  std::optional<SimTime> last;
  for (const auto& t : s.fs.transactions()) {
    if (t.state != TxnState::durable) continue;
    ASSERT_TRUE(t.durable_at);
    if (last) {
      EXPECT_GE(*t.durable_at, *last);
    }
    last = t.durable_at;
  }
}

TEST(Journal, BfsCommitsDispatchJdBeforeJc) {
  Simulation sim(workload(Regime::bfs_dr, WorkloadKind::dwsl, Syscall::fsync, 200, 4));
  sim.run();
  std::size_t checked = 0;
  for (const auto& t : sim.stack().fs.transactions()) {
    if (t.state != TxnState::durable || !t.jc_block) continue;
    EXPECT_LE(t.jd_dispatched, t.jc_dispatched);
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(Journal, Ext4OrderedModeIssuesNoFlush) {
  Simulation sim(workload(Regime::ext4_od, WorkloadKind::rand_write_sync, Syscall::fsync, 300));
  sim.run();
  EXPECT_EQ(sim.stack().device.flush_commands(), 0u);
  EXPECT_EQ(sim.stack().device.flushes(), 0u);
}

TEST(Journal, BarrierOnlyRegimeIssuesBarriersNotFlushes) {
  Simulation sim(workload(Regime::bfs_od, WorkloadKind::rand_write_barrier, Syscall::fdatabarrier, 300));
  sim.run();
  EXPECT_EQ(sim.stack().device.flushes(), 0u);
  EXPECT_EQ(sim.stack().device.barrier_commands(), 300u);
}

TEST(Sqlite, FlushesPerTransaction) {
  auto per_tx = [](Regime r, SqliteMode m) {
    RunConfig c = workload(r, WorkloadKind::sqlite_persist, Syscall::fdatasync, 50);
    c.workload.sqlite_mode = m;
    Simulation sim(c);
    sim.run();
    return static_cast<double>(sim.stack().device.flush_commands()) / 50.0;
  };
  EXPECT_EQ(per_tx(Regime::ext4_dr, SqliteMode::baseline), 4.0);
  EXPECT_EQ(per_tx(Regime::bfs_dr, SqliteMode::durable), 1.0);
  EXPECT_EQ(per_tx(Regime::bfs_od, SqliteMode::ordering), 0.0);
}

TEST(Wakeups, ActorsNeverDeadlockAcrossRegimes) {
  for (Regime r : {Regime::ext4_dr, Regime::ext4_od, Regime::bfs_dr, Regime::bfs_od}) {
    for (WorkloadKind k : {WorkloadKind::dwsl, WorkloadKind::commit_stream, WorkloadKind::rand_write_sync}) {
      Simulation sim(workload(r, k, Syscall::fsync, 120, 4));
      EXPECT_NO_THROW(sim.run()) << to_string(r) << " " << to_string(k);
      EXPECT_EQ(sim.ops_done(), 120u);
    }
  }
}
