#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bsim/check/crash_checker.hpp"
#include "bsim/harness/config.hpp"
#include "bsim/stack.hpp"

namespace bsim {

struct SimOptions {
  bool trace = false;
  bool queue_series = false;
  // Snapshot crash spaces and keep per-call synced sets.
  bool record_crash = false;
};

inline Task<SimTime> sync_call(FileSystem& fs, ActorId who, FileId f, Syscall c) {
  switch (c) {
    case Syscall::fsync: co_return co_await fs.fsync(who, f);
    case Syscall::fdatasync: co_return co_await fs.fdatasync(who, f);
    case Syscall::fbarrier: co_return co_await fs.fbarrier(who, f);
    case Syscall::fdatabarrier: co_return co_await fs.fdatabarrier(who, f);
    default: break;
  }
  throw std::invalid_argument("not a sync call: " + std::string(to_string(c)));
}

// One configured stack plus the application actors driving it.
class Simulation {
 public:
  explicit Simulation(RunConfig cfg, SimOptions opt = {}) : cfg_(std::move(cfg)), opt_(opt) {
    cfg_.validate();
    if (cfg_.workload.kind == WorkloadKind::rand_write_buffered && cfg_.stack.fs.writeback_period.us() == 0) {
      cfg_.stack.fs.writeback_period = SimTime::millis(5000);
    }
    if (cfg_.workload.kind == WorkloadKind::rand_write_barrier) cfg_.workload.sync_call = Syscall::fdatabarrier;
    cfg_.stack.fs.record_contracts = opt_.record_crash;
    stack_ = std::make_unique<IoStack>(cfg_.stack);
    stack_->engine.enable_trace(opt_.trace);
    stack_->device.record_queue_series(opt_.queue_series);
    if (opt_.record_crash) recorder_ = std::make_unique<CrashRecorder>(*stack_);
  }

  // Runs the workload to completion. Throws SimulationFault on stack faults.
  void run() {
    setup();
    stack_->engine.run();
    auto blocked = stack_->engine.deadlock_report();
    if (!blocked.empty()) throw SimulationFault("run ended with blocked actors: " + blocked.front());
    if (finished_ != apps_.size()) throw SimulationFault("workload did not finish");
  }

  const RunConfig& config() const { return cfg_; }
  IoStack& stack() { return *stack_; }
  const IoStack& stack() const { return *stack_; }
  const CrashRecorder* recorder() const { return recorder_.get(); }
  const std::vector<ActorId>& apps() const { return apps_; }
  SimTime app_finish() const { return app_finish_; }
  std::uint64_t ops_done() const { return ops_done_; }
  // Per-op latency of the workload's defining call.
  const std::vector<SimTime>& latencies() const { return lat_; }

 private:
  void setup() {
    const auto& w = cfg_.workload;
    FileSystem& fs = stack_->fs;
    std::vector<std::vector<FileId>> files(w.actors);
    for (unsigned a = 0; a < w.actors; ++a) {
      switch (w.kind) {
        case WorkloadKind::rand_write_sync:
        case WorkloadKind::rand_write_barrier:
        case WorkloadKind::rand_write_buffered:
          files[a].push_back(fs.create_file(w.block_range));
          break;
        case WorkloadKind::dwsl:
          files[a].push_back(fs.create_file(0));
          break;
        case WorkloadKind::sqlite_persist:
          files[a].push_back(fs.create_file(w.block_range));  // database
          files[a].push_back(fs.create_file(16));             // rollback journal
          break;
        case WorkloadKind::commit_stream:
          // A fresh file per op keeps inode pages from colliding across transactions.
          for (std::uint64_t i = 0; i < share(a); ++i) files[a].push_back(fs.create_file(1));
          break;
      }
    }
    fs.start();
    for (unsigned a = 0; a < w.actors; ++a) {
      const ActorId id = stack_->engine.add_actor("app" + std::to_string(a));
      apps_.push_back(id);
      stack_->engine.start(id, body(id, a, files[a]));
    }
  }

  std::uint64_t share(unsigned a) const {
    const auto& w = cfg_.workload;
    return w.ops / w.actors + (a < w.ops % w.actors ? 1 : 0);
  }

  // One commit-actor cycle (JD and JC dispatch) between successive starts.
  SimTime stagger() const { return cfg_.stack.profile.host.t_dispatch * 2; }

  Task<void> body(ActorId me, unsigned a, std::vector<FileId> files) {
    const auto& w = cfg_.workload;
    FileSystem& fs = stack_->fs;
    Engine& eng = stack_->engine;
    std::mt19937_64 rng(w.seed * 0x100000001b3ull + a);
    const std::uint64_t n = share(a);
    // Offset start times so group commit does not keep the actors in lockstep.
    if (w.kind == WorkloadKind::commit_stream && a > 0) co_await eng.delay(me, stagger() * a, "stagger");
    for (std::uint64_t i = 0; i < n; ++i) {
      switch (w.kind) {
        case WorkloadKind::rand_write_sync:
        case WorkloadKind::rand_write_barrier: {
          co_await fs.write(me, files[0], rng() % w.block_range, 1);
          lat_.push_back(co_await sync_call(fs, me, files[0], w.sync_call));
          break;
        }
        case WorkloadKind::rand_write_buffered: {
          const SimTime t0 = eng.now();
          co_await fs.write(me, files[0], rng() % w.block_range, 1);
          lat_.push_back(eng.now() - t0);
          break;
        }
        case WorkloadKind::dwsl: {
          co_await fs.write(me, files[0], fs.files().at(files[0]).size, 1);
          lat_.push_back(co_await sync_call(fs, me, files[0], w.sync_call));
          break;
        }
        case WorkloadKind::sqlite_persist: {
          const SimTime t0 = eng.now();
          co_await sqlite_tx(me, files[0], files[1], rng);
          lat_.push_back(eng.now() - t0);
          break;
        }
        case WorkloadKind::commit_stream: {
          co_await fs.touch(me, files[i]);
          lat_.push_back(co_await sync_call(fs, me, files[i], w.sync_call));
          break;
        }
      }
      ++ops_done_;
    }
    if (++finished_ == apps_.size()) {
      app_finish_ = eng.now();
      fs.shutdown();
    }
  }

  // Persist-mode rollback journal: log the old page images, stamp the
  // journal header, update the database, then invalidate the header.
  Task<void> sqlite_tx(ActorId me, FileId db, FileId journal, std::mt19937_64& rng) {
    FileSystem& fs = stack_->fs;
    const SqliteMode m = cfg_.workload.sqlite_mode;
    auto step = [&](bool last) {
      if (m == SqliteMode::baseline) return Syscall::fdatasync;
      if (m == SqliteMode::durable && last) return Syscall::fdatasync;
      return Syscall::fdatabarrier;
    };
    const std::uint64_t range = cfg_.workload.block_range > 1 ? cfg_.workload.block_range - 1 : 1;
    co_await fs.write(me, journal, 1, 2);
    co_await sync_call(fs, me, journal, step(false));
    co_await fs.write(me, journal, 0, 1);
    co_await sync_call(fs, me, journal, step(false));
    co_await fs.write(me, db, rng() % range, 2);
    co_await sync_call(fs, me, db, step(false));
    co_await fs.write(me, journal, 0, 1);
    co_await sync_call(fs, me, journal, step(true));
  }

  RunConfig cfg_;
  SimOptions opt_;
  std::unique_ptr<IoStack> stack_;
  std::unique_ptr<CrashRecorder> recorder_;
  std::vector<ActorId> apps_;
  std::size_t finished_ = 0;
  std::uint64_t ops_done_ = 0;
  SimTime app_finish_;
  std::vector<SimTime> lat_;
};

}  // namespace bsim
