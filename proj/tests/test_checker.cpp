#include <gtest/gtest.h>

#include <random>
#include <set>
#include <vector>

#include "bsim/check/crash_checker.hpp"
#include "bsim/check/oracle.hpp"
#include "bsim/harness/acceptance.hpp"
#include "bsim/harness/crash_suite.hpp"

using namespace bsim;

namespace {

BlockWrite bw(std::uint64_t a, std::uint64_t v = 1) { return BlockWrite{BlockAddr{a}, v}; }

std::vector<BlockWrite> all_blocks(const OrderTrace& t) {
  std::vector<BlockWrite> all;
  for (const auto& e : t.epochs) all.insert(all.end(), e.begin(), e.end());
  all.insert(all.end(), t.orderless.begin(), t.orderless.end());
  return all;
}

}  // namespace

// Two formulations of the epoch-prefix rule and the closed form agree on
// every subset of random small traces.
TEST(OracleProperty, FormulationsAgreeOnRandomTraces) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> sizes(1 + rng() % 4);
    std::size_t total = 0;
    for (auto& s : sizes) total += s = 1 + rng() % 3;
    const std::size_t orderless = rng() % 3;
    if (total + orderless > 11) continue;
    const OrderTrace t = accept::synthetic_trace(sizes, orderless);
    const auto all = all_blocks(t);
    const LegalitySet ls(t);
    std::uint64_t legal = 0;
    std::set<std::vector<BlockWrite>> legal_sets;
    for (std::uint32_t m = 0; m < (1u << all.size()); ++m) {
      std::vector<BlockWrite> cand;
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (m >> i & 1u) cand.push_back(all[i]);
      }
      const bool a = oracle_legal(t, cand);
      ASSERT_EQ(a, oracle_legal_scan(t.epochs, cand));
      ASSERT_EQ(a, ls.contains(cand));
      if (a) {
        ++legal;
        std::sort(cand.begin(), cand.end());
        legal_sets.insert(cand);
      }
    }
    EXPECT_EQ(legal, ls.count());
    const auto en = ls.enumerate();
    EXPECT_EQ(std::set<std::vector<BlockWrite>>(en.begin(), en.end()), legal_sets);
  }
}

TEST(Oracle, EpochPrefixExamples) {
  const std::vector<std::vector<BlockWrite>> epochs{{bw(1), bw(2)}, {bw(3)}, {bw(4)}};
  EXPECT_TRUE(oracle_legal_scan(epochs, {}));
  EXPECT_TRUE(oracle_legal_scan(epochs, {bw(2)}));
  EXPECT_TRUE(oracle_legal_scan(epochs, {bw(1), bw(2), bw(3)}));
  EXPECT_FALSE(oracle_legal_scan(epochs, {bw(1), bw(3)}));
  EXPECT_FALSE(oracle_legal_scan(epochs, {bw(1), bw(2), bw(4)}));
}

TEST(JournalVerdict, CleanPrefixRecovers) {
  std::vector<TxnLayout> layout{{1, {bw(10)}, {bw(100)}, bw(101), {}, true}, {2, {bw(11)}, {bw(102)}, bw(103), {}, true}};
  CrashState cs{SimTime(0), {bw(10), bw(11), bw(100), bw(101), bw(102)}};
  const auto v = check_journal_consistency(cs, layout);
  EXPECT_TRUE(v.consistent);
  EXPECT_EQ(v.recovered, 1u);
}

TEST(JournalVerdict, CommitWithoutDescriptorIsPremature) {
  std::vector<TxnLayout> layout{{1, {bw(10)}, {bw(100)}, bw(101), {}, true}};
  CrashState cs{SimTime(0), {bw(10), bw(101)}};
  const auto v = check_journal_consistency(cs, layout);
  EXPECT_FALSE(v.consistent);
  EXPECT_EQ(v.kind, "premature-commit");
  EXPECT_EQ(v.witness, (std::vector<BlockWrite>{bw(100)}));
}

TEST(JournalVerdict, NewerDataVersionCovers) {
  std::vector<TxnLayout> layout{{1, {bw(10, 1)}, {bw(100)}, bw(101), {}, true}};
  CrashState cs{SimTime(0), {bw(10, 5), bw(100), bw(101)}};
  EXPECT_TRUE(check_journal_consistency(cs, layout).consistent);
}

TEST(JournalVerdict, LaterCommitWithoutEarlierIsInversion) {
  std::vector<TxnLayout> layout{{1, {}, {bw(100)}, bw(101), {}, true}, {2, {}, {bw(102)}, bw(103), {}, true}};
  CrashState cs{SimTime(0), {bw(100), bw(102), bw(103)}};
  const auto v = check_journal_consistency(cs, layout);
  EXPECT_FALSE(v.consistent);
  EXPECT_EQ(v.kind, "order-inversion");
  EXPECT_EQ(v.txn, std::optional<TxnId>(2));
}

TEST(CrashSuite, CorrectStackHasNoViolations) {
  const SuiteResult s = run_crash_suite();
  EXPECT_EQ(s.total.violation_count, 0u);
  EXPECT_TRUE(s.total.conjunction());
  EXPECT_TRUE(s.total.issue_persist);
  EXPECT_GT(s.total.states_checked, 0u);
  EXPECT_GT(s.total.max_recovered, 0u);
}

class MutationTest : public ::testing::TestWithParam<Mutation> {};

TEST_P(MutationTest, EveryMechanismIsLoadBearing) {
  const SuiteResult s = run_crash_suite(GetParam());
  EXPECT_GT(s.total.violation_count, 0u) << to_string(GetParam());
  ASSERT_FALSE(s.total.violations.empty());
  EXPECT_FALSE(s.total.violations.front().witness.empty());
}

INSTANTIATE_TEST_SUITE_P(AllMutations, MutationTest,
                         ::testing::Values(Mutation::ordered_priority, Mutation::epoch_blocking,
                                           Mutation::barrier_reassignment, Mutation::flush_before_commit),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(CrashSuite, SampledStrategyIsDeterministic) {
  CheckOptions opt;
  opt.strategy = Strategy::sampled;
  opt.samples = 300;
  opt.seed = 9;
  const auto a = run_crash_suite(Mutation::epoch_blocking, 4, opt);
  const auto b = run_crash_suite(Mutation::epoch_blocking, 4, opt);
  EXPECT_EQ(a.total.states_checked, b.total.states_checked);
  EXPECT_EQ(a.total.violation_count, b.total.violation_count);
  EXPECT_EQ(a.total.by_kind, b.total.by_kind);
}

TEST(CrashSuite, MutationNamesRoundTrip) {
  for (Mutation m : {Mutation::none, Mutation::ordered_priority, Mutation::epoch_blocking,
                     Mutation::barrier_reassignment, Mutation::flush_before_commit}) {
    EXPECT_EQ(parse_mutation(to_string(m)), m);
  }
  EXPECT_THROW(parse_mutation("nope"), std::invalid_argument);
}

TEST(Checker, ExhaustiveRefusesLargeVolatileSet) {
  // ignore_barrier keeps every cached block in the free set.
  StackConfig cfg;
  cfg.profile = profiles::plain_ssd();
  cfg.profile.device.ignore_barrier = true;
  cfg.profile.device.eviction_interval = SimTime::millis(100);
  IoStack s(cfg);
  CrashRecorder rec(s);
  const ActorId app = s.engine.add_actor("raw");
  auto body = [](IoStack& st, ActorId) -> Task<void> {
    for (std::uint64_t i = 0; i < 24; ++i) {
      WriteRequest r;
      r.attrs = Attr::ordered;
      r.blocks.push_back(BlockWrite{BlockAddr{100 + 2 * i}, 1});
      st.block.submit(std::move(r));
    }
    co_return;
  };
  s.engine.start(app, body(s, app));
  s.engine.run();
  EXPECT_THROW(verify(s, rec), ExhaustiveRefused);
  CheckOptions opt;
  opt.strategy = Strategy::sampled;
  opt.samples = 50;
  EXPECT_EQ(verify(s, rec, opt).states_checked, 50u);
}

// In lfs_recovery mode the checker visits exactly the prefix states of
// every recorded snapshot.
TEST(Checker, LfsEnumerationIsComplete) {
  const StackConfig cfg = suite_stack(BarrierMode::lfs_recovery, 3, Mutation::none);
  IoStack s(cfg);
  CrashRecorder rec(s);
  const RawTrace trace = make_raw_trace(3, cfg.profile.device.t_transfer);
  const ActorId app = s.engine.add_actor("raw");
  auto body = [](IoStack& st, ActorId me, const RawTrace& t) -> Task<void> {
    for (const auto& op : t.ops) {
      if (st.engine.now() < op.at) co_await st.engine.delay(me, op.at - st.engine.now());
      WriteRequest r = op.req;
      r.issuer = me;
      st.block.submit(std::move(r));
    }
  };
  s.engine.start(app, body(s, app, trace));
  s.engine.run();
  std::uint64_t expected = 0;
  for (const auto& snap : rec.snapshots()) {
    EXPECT_TRUE(snap.space.free.empty());
    expected += snap.space.prefix.size() + 1;
  }
  const auto r = verify(s, rec);
  EXPECT_EQ(r.states_checked, expected);
  EXPECT_TRUE(r.ok());
}

TEST(Checker, RandomTracesHaveExpectedShape) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const RawTrace t = make_raw_trace(seed, SimTime(70));
    EXPECT_GE(t.epochs, 2u);
    EXPECT_LE(t.epochs, 4u);
    EXPECT_LE(t.orderless_blocks, 4u);
    for (std::size_t i = 1; i < t.ops.size(); ++i) EXPECT_LE(t.ops[i - 1].at, t.ops[i].at);
  }
}
