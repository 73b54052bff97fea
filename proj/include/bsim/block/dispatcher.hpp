#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bsim/block/request.hpp"
#include "bsim/block/scheduler.hpp"
#include "bsim/device/device.hpp"
#include "bsim/sim/engine.hpp"

namespace bsim {

struct BlockLayerConfig {
  SchedulerConfig scheduler;
  SimTime retry_interval{3000};
  unsigned max_retries = 1000;
  // Re-run dispatch whenever the device completes a command; the retry
  // timer stays as the fallback.
  bool restart_on_completion = true;
  // Mutation switch: barrier commands go out with ordered priority.
  bool ordered_priority = true;
};

struct IssueRecord {
  SimTime t;
  RequestId id = kNoRequest;
  std::uint64_t issue_seq = 0;
  std::vector<BlockWrite> blocks;
  Attrs attrs;
  Role role = Role::data;
  ActorId issuer = kNoActor;
};

struct DispatchRecord {
  SimTime t;
  CommandId cmd = 0;
  CommandKind kind = CommandKind::write;
  RequestId req = kNoRequest;
  std::vector<RequestId> constituents;
  Role role = Role::data;
  Attrs attrs;
  Priority priority = Priority::simple;
  std::uint32_t retries = 0;
};

// Block layer: epoch scheduler in front of order-preserving dispatch. When
// the device queue is full the command is handed to the retry daemon and
// the caller continues.
class BlockLayer {
 public:
  using Callback = std::function<void()>;

  BlockLayer(Engine& eng, StorageDevice& dev, BlockLayerConfig cfg = {})
      : eng_(eng), dev_(dev), cfg_(cfg), sched_(cfg.scheduler) {
    kblockd_ = eng_.add_actor("kblockd");
    dev_.on_completion([this](const StorageCommand& c, const CompletionRecord& rec) { completed(c, rec); });
  }
  BlockLayer(const BlockLayer&) = delete;
  BlockLayer& operator=(const BlockLayer&) = delete;

  // `on_transfer` fires when the device reports the request transferred.
  RequestId submit(WriteRequest r, Callback on_transfer = {}) {
    r.id = next_req_++;
    r.issue_seq = next_issue_++;
    issues_.push_back(IssueRecord{eng_.now(), r.id, r.issue_seq, r.blocks, r.attrs, r.role, r.issuer});
    if (on_transfer) waiters_.emplace(r.id, std::move(on_transfer));
    const RequestId id = r.id;
    sched_.submit(std::move(r));
    pump();
    return id;
  }

  // Flush bypasses the scheduler and goes out head-of-queue.
  void flush(Callback on_done = {}) {
    StorageCommand c = make_flush_command();
    const RequestId token = next_req_++;
    c.req.id = token;
    if (on_done) waiters_.emplace(token, std::move(on_done));
    held_.push_back(Held{std::move(c), 0});
    pump();
  }

  EpochScheduler& scheduler() { return sched_; }
  const EpochScheduler& scheduler() const { return sched_; }
  StorageDevice& device() { return dev_; }
  const StorageDevice& device() const { return dev_; }
  const BlockLayerConfig& config() const { return cfg_; }
  ActorId retry_actor() const { return kblockd_; }

  const std::vector<IssueRecord>& issues() const { return issues_; }
  const std::vector<DispatchRecord>& dispatches() const { return dispatches_; }
  std::uint64_t retries() const { return retries_; }
  bool quiescent() const { return sched_.idle() && held_.empty() && !dev_.busy(); }

  // Command priority for a request leaving the scheduler.
  Priority priority_for(const WriteRequest& r) const {
    if (r.barrier() && cfg_.ordered_priority) return Priority::ordered;
    return Priority::simple;
  }

 private:
  struct Held {
    StorageCommand cmd;
    std::uint32_t retries = 0;
  };

  void pump() {
    while (true) {
      if (held_.empty()) {
        auto next = sched_.schedule_next();
        if (!next) return;
        StorageCommand c;
        c.kind = CommandKind::write;
        c.barrier = next->barrier();
        c.priority = priority_for(*next);
        c.req = std::move(*next);
        held_.push_back(Held{std::move(c), 0});
      }
      if (!try_dispatch(held_.front())) {
        arm_retry();
        return;
      }
      held_.pop_front();
    }
  }

  bool try_dispatch(Held& h) {
    StorageCommand c = h.cmd;
    if (dev_.enqueue(c) == EnqueueResult::queue_full) return false;
    dispatches_.push_back(DispatchRecord{eng_.now(), dev_.last_accepted(), c.kind, c.req.id, c.req.constituents(),
                                         c.req.role, c.req.attrs, c.priority, h.retries});
    return true;
  }

  void arm_retry() {
    if (retry_armed_) return;
    retry_armed_ = true;
    eng_.schedule_in(
        cfg_.retry_interval,
        [this] {
          retry_armed_ = false;
          if (held_.empty()) return;
          ++retries_;
          if (++held_.front().retries > cfg_.max_retries) {
            throw SimulationFault("dispatch retry limit exceeded for request " +
                                  std::to_string(held_.front().cmd.req.id));
          }
          pump();
        },
        "retry", kblockd_);
  }

  void completed(const StorageCommand& c, const CompletionRecord&) {
    if (c.kind == CommandKind::flush) {
      fire(c.req.id);
    } else {
      fire(c.req.id);
      for (RequestId m : c.req.merged) fire(m);
    }
    if (cfg_.restart_on_completion) pump();
  }

  void fire(RequestId id) {
    auto it = waiters_.find(id);
    if (it == waiters_.end()) return;
    Callback cb = std::move(it->second);
    waiters_.erase(it);
    cb();
  }

  Engine& eng_;
  StorageDevice& dev_;
  BlockLayerConfig cfg_;
  EpochScheduler sched_;
  ActorId kblockd_ = kNoActor;

  std::deque<Held> held_;
  bool retry_armed_ = false;
  std::uint64_t retries_ = 0;
  RequestId next_req_ = 1;
  std::uint64_t next_issue_ = 0;
  std::unordered_map<RequestId, Callback> waiters_;

  std::vector<IssueRecord> issues_;
  std::vector<DispatchRecord> dispatches_;
};

}  // namespace bsim
