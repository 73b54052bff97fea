#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bsim/harness/config.hpp"
#include "bsim/harness/report.hpp"
#include "bsim/harness/workload.hpp"

using namespace bsim;

namespace {

RunConfig small(WorkloadKind k, Regime r, std::uint64_t ops = 300) {
  RunConfig c;
  c.stack.fs.regime = r;
  c.workload.kind = k;
  c.workload.ops = ops;
  c.workload.actors = 2;
  c.workload.block_range = 4096;
  return c;
}

Report run(RunConfig c, SimOptions opt = {}) {
  Simulation sim(std::move(c), opt);
  sim.run();
  return summarize(sim);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

}  // namespace

TEST(Determinism, SameSeedSameRun) {
  auto c = small(WorkloadKind::rand_write_sync, Regime::bfs_dr);
  c.stack.block.scheduler.discipline = Discipline::random;
  const Report a = run(c);
  const Report b = run(c);
  EXPECT_EQ(a.trace_hash, b.trace_hash);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Determinism, SeedChangesOffsets) {
  auto addrs = [](std::uint64_t seed) {
    auto c = small(WorkloadKind::rand_write_sync, Regime::bfs_dr, 50);
    c.seed_all(seed);
    Simulation sim(c);
    sim.run();
    std::vector<std::uint64_t> out;
    for (const auto& i : sim.stack().block.issues()) out.push_back(i.blocks.front().addr.value);
    return out;
  };
  EXPECT_EQ(addrs(5), addrs(5));
  EXPECT_NE(addrs(5), addrs(6));
}

TEST(Determinism, TraceOutputIsStable) {
  auto c = small(WorkloadKind::dwsl, Regime::bfs_od, 40);
  c.workload.sync_call = Syscall::fdatabarrier;
  auto trace = [&] {
    SimOptions opt;
    opt.trace = true;
    Simulation sim(c, opt);
    sim.run();
    std::ostringstream os;
    write_trace(os, sim.stack());
    return os.str();
  };
  const std::string t = trace();
  EXPECT_EQ(t, trace());
  std::istringstream in(t);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    ASSERT_TRUE(j.contains("type"));
  }
  EXPECT_GT(lines, 100u);
}

TEST(Report, JsonAndCsvCarryTheSameNumbers) {
  const Report r = run(small(WorkloadKind::rand_write_sync, Regime::ext4_dr));
  std::ostringstream js;
  std::ostringstream cs;
  write_report(js, {r}, ReportFormat::json);
  write_report(cs, {r}, ReportFormat::csv);
  const auto j = nlohmann::json::parse(js.str());
  std::istringstream lines(cs.str());
  std::string header;
  std::string row;
  std::getline(lines, header);
  std::getline(lines, row);
  const auto names = split(header);
  const auto values = split(row);
  ASSERT_EQ(names.size(), values.size());
  std::size_t compared = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    nlohmann::json v;
    if (names[i].rfind("lat_", 0) == 0) {
      std::string k = names[i].substr(4, names[i].size() - 7);
      if (k == "p999") k = "p99.9";
      if (k == "p9999") k = "p99.99";
      v = j["latency_us"][k];
    } else {
      v = j[names[i]];
    }
    ASSERT_FALSE(v.is_null()) << names[i];
    if (v.is_string()) {
      EXPECT_EQ(v.get<std::string>(), values[i]) << names[i];
    } else {
      EXPECT_EQ(v.get<double>(), std::stod(values[i])) << names[i];
    }
    ++compared;
  }
  EXPECT_EQ(compared, names.size());
}

TEST(Report, SingleBufferedWriteIssuesNoFlush) {
  RunConfig c = small(WorkloadKind::rand_write_buffered, Regime::bfs_dr, 1);
  c.workload.actors = 1;
  const Report r = run(c);
  EXPECT_EQ(r.flush_commands, 0u);
  EXPECT_EQ(r.ops, 1u);
  EXPECT_GT(r.iops, 0.0);
}

TEST(Report, PercentilesAreMonotonic) {
  for (WorkloadKind k : {WorkloadKind::rand_write_sync, WorkloadKind::dwsl, WorkloadKind::sqlite_persist}) {
    const auto l = run(small(k, Regime::ext4_dr)).latency;
    EXPECT_LE(l.median, l.p99);
    EXPECT_LE(l.p99, l.p999);
    EXPECT_LE(l.p999, l.p9999);
    EXPECT_LE(l.p9999, l.max);
    EXPECT_GT(l.mean, 0.0);
  }
}

TEST(Report, NearestRankPercentile) {
  const std::vector<std::uint64_t> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(percentile(v, 0.5), 5.0);
  EXPECT_EQ(percentile(v, 0.99), 10.0);
  EXPECT_EQ(percentile(v, 0.0), 1.0);
  EXPECT_EQ(percentile({}, 0.5), 0.0);
}

TEST(Report, TextMentionsRegimeAndWorkload) {
  std::ostringstream os;
  write_report(os, {run(small(WorkloadKind::dwsl, Regime::bfs_dr, 20))}, ReportFormat::text);
  EXPECT_NE(os.str().find("BFS_DR"), std::string::npos);
  EXPECT_NE(os.str().find("dwsl"), std::string::npos);
}

TEST(Config, ProfileAppliesBeforeOverrides) {
  std::istringstream in("[device]\nqueue_depth=4\nprofile=plain-ssd\n[fs]\nregime=BFS_OD\n");
  RunConfig c;
  bsim::apply(c, read_ini(in));
  EXPECT_EQ(c.stack.profile.name, "plain-ssd");
  EXPECT_EQ(c.stack.profile.device.queue_depth, 4u);
  EXPECT_EQ(c.stack.profile.device.t_flush.us(), 2945u);
  EXPECT_EQ(c.stack.fs.regime, Regime::bfs_od);
}

TEST(Config, IniRoundTrip) {
  RunConfig c;
  bsim::apply(c, Assignments{{"profile", "supercap-ssd"}, {"discipline", "random"}, {"ops", "77"}, {"epoch_blocking", "false"}});
  std::istringstream in(to_ini(c));
  RunConfig d;
  bsim::apply(d, read_ini(in));
  EXPECT_EQ(to_ini(c), to_ini(d));
}

TEST(Config, ErrorsAreInvalidArgument) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    RunConfig c;
    bsim::apply(c, read_ini(in));
    c.validate();
  };
  EXPECT_THROW(parse("[device]\nbogus=1\n"), std::invalid_argument);
  EXPECT_THROW(parse("[fs]\nqueue_depth=4\n"), std::invalid_argument);
  EXPECT_THROW(parse("[device]\nqueue_depth=four\n"), std::invalid_argument);
  EXPECT_THROW(parse("[device]\nqueue_depth=0\n"), std::invalid_argument);
  EXPECT_THROW(parse("[device]\nprofile=floppy\n"), std::invalid_argument);
  EXPECT_THROW(parse("[fs]\nregime=ZFS\n"), std::invalid_argument);
  EXPECT_THROW(parse("[workload]\nops=0\n"), std::invalid_argument);
  EXPECT_THROW(parse("[device]\nsupercap=maybe\n"), std::invalid_argument);
  EXPECT_THROW(parse("queue_depth=3\n"), std::invalid_argument);
  EXPECT_THROW(parse("[device\nqueue_depth=3\n"), std::invalid_argument);
  RunConfig c;
  EXPECT_THROW(bsim::apply(c, Assignments{{"nope", "1"}}), std::invalid_argument);
}

TEST(Config, EveryKeyIsUniqueAndSettable) {
  std::set<std::string> seen;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(seen.insert(k.name).second) << k.name;
    EXPECT_EQ(find_key(k.name), &k);
  }
  EXPECT_EQ(find_key("missing"), nullptr);
}

TEST(Simulation, BarrierWorkloadOnExt4IsRejected) {
  RunConfig c = small(WorkloadKind::rand_write_barrier, Regime::ext4_dr, 5);
  Simulation sim(c);
  EXPECT_THROW(sim.run(), std::invalid_argument);
}

TEST(Simulation, CommitStreamProducesIntervals) {
  RunConfig c = small(WorkloadKind::commit_stream, Regime::bfs_od, 800);
  c.workload.actors = 8;
  c.workload.sync_call = Syscall::fbarrier;
  const Report r = run(c);
  EXPECT_GT(r.commit_interval_samples, 100u);
  EXPECT_NEAR(r.commit_interval_us, static_cast<double>(c.stack.profile.host.t_dispatch.us()), 4.0);
}
