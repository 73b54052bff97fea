#include <gtest/gtest.h>

#include <map>
#include <random>
#include <vector>

#include "bsim/block/scheduler.hpp"

using namespace bsim;

namespace {

WriteRequest req(RequestId id, std::uint64_t addr, Attrs a = {}, std::size_t n = 1) {
  WriteRequest r;
  r.id = id;
  r.issue_seq = id;
  r.attrs = a;
  for (std::size_t i = 0; i < n; ++i) r.blocks.push_back(BlockWrite{BlockAddr{addr + i}, 1});
  if (!r.ordered()) r.role = Role::orderless;
  return r;
}

const Attrs kOrd = Attr::ordered;
const Attrs kBar = Attr::ordered | Attr::barrier;

}  // namespace

TEST(Merge, AdjacentRequestsBackMerge) {
  EpochScheduler s({Discipline::merge_fifo});
  s.submit(req(1, 10, kOrd));
  s.submit(req(2, 11, kOrd));
  ASSERT_EQ(s.queue().size(), 1u);
  EXPECT_EQ(s.queue().front().blocks.size(), 2u);
  EXPECT_EQ(s.queue().front().constituents(), (std::vector<RequestId>{1, 2}));
}

TEST(Merge, OrderedWinsAndBarrierNeverSurvives) {
  WriteRequest a = req(1, 10);
  a.role = Role::data;
  WriteRequest b = req(2, 11, kBar);
  b.epoch = 3;
  const WriteRequest m = merge(a, b);
  EXPECT_TRUE(m.ordered());
  EXPECT_FALSE(m.barrier());
  EXPECT_EQ(m.epoch, std::optional<EpochId>(3));
}

TEST(Merge, RefusesAcrossEpochsAndGaps) {
  WriteRequest a = req(1, 10, kOrd);
  WriteRequest b = req(2, 11, kOrd);
  a.epoch = 0;
  b.epoch = 1;
  EXPECT_THROW(merge(a, b), MergeRefused);
  EXPECT_THROW(merge(req(1, 10), req(2, 12)), MergeRefused);
  EXPECT_FALSE(mergeable(a, b));
}

TEST(Merge, ReassignedBarrierMergesAndReturnsOnDrain) {
  EpochScheduler s({Discipline::merge_fifo});
  s.submit(req(1, 10, kOrd));
  s.submit(req(2, 11, kBar));
  ASSERT_EQ(s.queue().size(), 1u);
  EXPECT_TRUE(s.schedule_next()->barrier());
}

TEST(Merge, FixedBarrierIsNotMerged) {
  SchedulerConfig c{Discipline::merge_fifo};
  c.barrier_reassignment = false;
  EpochScheduler s(c);
  s.submit(req(1, 10, kOrd));
  s.submit(req(2, 11, kBar));
  EXPECT_EQ(s.queue().size(), 2u);
}

TEST(Scheduler, MalformedRequestRejected) {
  EpochScheduler s;
  EXPECT_THROW(s.submit(req(1, 10, Attr::barrier)), std::invalid_argument);
  WriteRequest empty;
  empty.id = 2;
  EXPECT_THROW(s.submit(empty), std::invalid_argument);
}

TEST(Scheduler, BarrierBlocksAdmissionUntilEpochDrains) {
  EpochScheduler s({Discipline::fifo});
  EXPECT_EQ(s.submit(req(1, 10, kOrd)), SubmitResult::accepted);
  EXPECT_EQ(s.submit(req(2, 20, kBar)), SubmitResult::accepted);
  EXPECT_FALSE(s.accepting());
  EXPECT_EQ(s.submit(req(3, 30, kOrd)), SubmitResult::deferred);
  EXPECT_EQ(s.submit(req(4, 40)), SubmitResult::deferred);
  EXPECT_EQ(s.schedule_next()->id, 1u);
  EXPECT_FALSE(s.accepting());
  const auto last = s.schedule_next();
  EXPECT_EQ(last->id, 2u);
  EXPECT_TRUE(last->barrier());
  EXPECT_TRUE(s.accepting());
  EXPECT_TRUE(s.deferred().empty());
  EXPECT_EQ(s.queue().size(), 2u);
  EXPECT_EQ(s.queue()[0].epoch, std::optional<EpochId>(1));
}

TEST(Scheduler, DeferredBacklogKeepsOrderAcrossSecondBarrier) {
  EpochScheduler s({Discipline::fifo});
  s.submit(req(1, 10, kBar));
  s.submit(req(2, 20, kOrd));
  s.submit(req(3, 30, kBar));
  s.submit(req(4, 40, kOrd));
  s.submit(req(5, 50));
  ASSERT_EQ(s.deferred().size(), 4u);
  s.schedule_next();
  // 2 and 3 enter epoch 1; 3 closes it, so 4 and 5 stay deferred.
  ASSERT_EQ(s.queue().size(), 2u);
  ASSERT_EQ(s.deferred().size(), 2u);
  EXPECT_EQ(s.deferred()[0].id, 4u);
  EXPECT_EQ(s.deferred()[1].id, 5u);
  s.schedule_next();
  s.schedule_next();
  EXPECT_TRUE(s.deferred().empty());
  EXPECT_EQ(s.schedule_next()->id, 4u);
  EXPECT_EQ(s.schedule_next()->id, 5u);
  EXPECT_TRUE(s.idle());
}

TEST(Scheduler, WithoutEpochBlockingAdmissionContinues) {
  SchedulerConfig c{Discipline::fifo};
  c.epoch_blocking = false;
  EpochScheduler s(c);
  s.submit(req(1, 10, kBar));
  EXPECT_EQ(s.submit(req(2, 20, kOrd)), SubmitResult::accepted);
}

TEST(Scheduler, TakeRemovesMergedConstituent) {
  EpochScheduler s({Discipline::merge_fifo});
  s.submit(req(1, 10));
  s.submit(req(2, 11));
  const auto r = s.take(2);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->id, 1u);
  EXPECT_TRUE(s.empty());
  EXPECT_FALSE(s.take(9));
}

// Random traces under the random discipline: ORDERED dispatch never goes
// back an epoch, and the barrier lands on the last dispatch of each closed epoch.
TEST(SchedulerProperty, ReassignedBarrierMarksLastDispatchOfEachEpoch) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    std::mt19937_64 rng(seed);
    EpochScheduler s({Discipline::random, seed});
    std::vector<WriteRequest> out;
    RequestId next = 1;
    std::uint64_t addr = 0;
    std::size_t barriers = 0;
    for (int step = 0; step < 60; ++step) {
      if (rng() % 3 != 0) {
        const auto kind = rng() % 5;
        Attrs a = kind == 0 ? Attrs{} : kind == 1 ? kBar : kOrd;
        barriers += a.has(Attr::barrier) ? 1 : 0;
        s.submit(req(next++, addr, a));
        addr += 2;
      } else if (auto r = s.schedule_next()) {
        out.push_back(std::move(*r));
      }
    }
    while (auto r = s.schedule_next()) out.push_back(std::move(*r));
    ASSERT_TRUE(s.idle()) << "seed " << seed;

    std::optional<EpochId> cur;
    std::map<EpochId, std::vector<bool>> flags;
    for (const auto& r : out) {
      if (!r.ordered()) {
        EXPECT_FALSE(r.barrier());
        continue;
      }
      ASSERT_TRUE(r.epoch);
      if (cur) {
        ASSERT_GE(*r.epoch, *cur) << "seed " << seed;
      }
      cur = r.epoch;
      flags[*r.epoch].push_back(r.barrier());
    }
    std::size_t seen = 0;
    for (const auto& [e, f] : flags) {
      const bool closed = e < s.closed_epochs();
      for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], closed && i + 1 == f.size()) << "seed " << seed;
      seen += closed ? 1 : 0;
    }
    EXPECT_EQ(s.closed_epochs(), barriers);
    EXPECT_LE(seen, barriers);
  }
}

TEST(SchedulerProperty, WithoutReassignmentBarrierCanLeaveEarly) {
  bool early = false;
  for (std::uint64_t seed = 1; seed <= 50 && !early; ++seed) {
    SchedulerConfig c{Discipline::random, seed};
    c.barrier_reassignment = false;
    EpochScheduler s(c);
    s.submit(req(1, 10, kOrd));
    s.submit(req(2, 20, kOrd));
    s.submit(req(3, 30, kBar));
    early = s.schedule_next()->barrier();
  }
  EXPECT_TRUE(early);
}
