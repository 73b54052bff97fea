#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "bsim/sim/engine.hpp"

using namespace bsim;
using namespace bsim::literals;

TEST(Engine, SameInstantEventsRunInInsertionOrder) {
  Engine eng;
  std::vector<int> order;
  eng.schedule(5_us, [&] { order.push_back(2); });
  eng.schedule(3_us, [&] { order.push_back(1); });
  eng.schedule(5_us, [&] { order.push_back(3); });
  eng.schedule(5_us, [&] { order.push_back(4); });
  EXPECT_EQ(eng.run(), 4u);
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(eng.now(), 5_us);
}

TEST(Engine, PastEventIsCausalityError) {
  Engine eng;
  eng.schedule(10_us, [&] { eng.schedule(4_us, [] {}); });
  EXPECT_THROW(eng.run(), CausalityError);
}

TEST(Engine, RunUntilStopsAtLimit) {
  Engine eng;
  int fired = 0;
  eng.schedule(10_us, [&] { ++fired; });
  eng.schedule(20_us, [&] { ++fired; });
  EXPECT_EQ(eng.run_until(15_us), 1u);
  EXPECT_EQ(fired, 1);
  EXPECT_EQ(eng.now(), 15_us);
  EXPECT_EQ(eng.pending(), 1u);
}

namespace {

Task<void> sleeper(Engine& eng, ActorId me, std::vector<SimTime>& log) {
  co_await eng.delay(me, 7_us);
  log.push_back(eng.now());
  co_await eng.suspend(me, "waiting");
  log.push_back(eng.now());
}

Task<int> answer(Engine& eng, ActorId me) {
  co_await eng.delay(me, 2_us);
  co_return 42;
}

Task<void> caller(Engine& eng, ActorId me, int& out) { out = co_await answer(eng, me); }

Task<void> thrower(Engine& eng, ActorId me) {
  co_await eng.delay(me, 1_us);
  throw SimulationFault("boom");
}

}  // namespace

TEST(Engine, WakeResumesAfterOneContextSwitch) {
  Engine eng(SimTime(100));
  std::vector<SimTime> log;
  const ActorId a = eng.add_actor("a");
  eng.start(a, sleeper(eng, a, log));
  eng.schedule(50_us, [&] { eng.wake(a); });
  eng.run();
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0], 7_us);
  EXPECT_EQ(log[1], 150_us);
  EXPECT_EQ(eng.actor(a).wakeups, 1u);
  EXPECT_EQ(eng.actor(a).state, ActorState::terminated);
}

TEST(Engine, NestedTaskReturnsValue) {
  Engine eng;
  const ActorId a = eng.add_actor("a");
  int out = 0;
  eng.start(a, caller(eng, a, out));
  eng.run();
  EXPECT_EQ(out, 42);
  EXPECT_EQ(eng.now(), 2_us);
}

TEST(Engine, ActorExceptionPropagatesOutOfRun) {
  Engine eng;
  const ActorId a = eng.add_actor("a");
  eng.start(a, thrower(eng, a));
  EXPECT_THROW(eng.run(), SimulationFault);
}

TEST(Engine, WakeOfRunnableActorIsFault) {
  Engine eng;
  const ActorId a = eng.add_actor("a");
  EXPECT_THROW(eng.wake(a), SimulationFault);
  eng.block(a, "x", [] {});
  EXPECT_THROW(eng.block(a, "y", [] {}), SimulationFault);
}

TEST(Engine, DeadlockReportNamesBlockedActors) {
  Engine eng;
  std::vector<SimTime> log;
  const ActorId a = eng.add_actor("stuck");
  eng.start(a, sleeper(eng, a, log));
  eng.run();
  const auto rep = eng.deadlock_report();
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_NE(rep[0].find("stuck"), std::string::npos);
  EXPECT_NE(rep[0].find("waiting"), std::string::npos);
}

TEST(Engine, TraceHashIsDeterministic) {
  auto run = [](SimTime wake_at) {
    Engine eng(SimTime(3));
    std::vector<SimTime> log;
    const ActorId a = eng.add_actor("a");
    eng.start(a, sleeper(eng, a, log));
    eng.schedule(wake_at, [&eng, a] { eng.wake(a); }, "waker");
    eng.run();
    return eng.trace_hash();
  };
  EXPECT_EQ(run(20_us), run(20_us));
  EXPECT_NE(run(20_us), run(21_us));
}

TEST(Engine, TraceRecordsWhenEnabled) {
  Engine eng;
  eng.enable_trace(true);
  eng.schedule(1_us, [] {}, "tick");
  eng.run();
  ASSERT_EQ(eng.trace().size(), 1u);
  EXPECT_STREQ(eng.trace()[0].action, "tick");
}
