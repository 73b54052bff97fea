#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "bsim/device/command.hpp"
#include "bsim/device/config.hpp"
#include "bsim/device/crash.hpp"
#include "bsim/sim/engine.hpp"

namespace bsim {

struct CacheEntry {
  BlockWrite write;
  std::uint64_t transfer_seq = 0;
  // Device-side epoch: bumped after every barrier command is transferred.
  std::uint64_t epoch_tag = 0;
  RequestId req = kNoRequest;
};

struct QueueSample {
  SimTime t;
  std::size_t depth = 0;
};

// Flash device: bounded command queue with SCSI priority semantics, a
// writeback cache, flush/FUA, and a barrier-mode specific persist rule.
// Commands are serviced one at a time.
class StorageDevice {
 public:
  using CompletionHandler = std::function<void(const StorageCommand&, const CompletionRecord&)>;

  StorageDevice(Engine& eng, DeviceConfig cfg)
      : eng_(eng), cfg_(cfg), rng_(cfg.seed), crash_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
  }
  StorageDevice(const StorageDevice&) = delete;
  StorageDevice& operator=(const StorageDevice&) = delete;

  const DeviceConfig& config() const { return cfg_; }
  void on_completion(CompletionHandler h) { handler_ = std::move(h); }

  EnqueueResult enqueue(StorageCommand cmd) {
    if (occupancy() >= cfg_.queue_depth) return EnqueueResult::queue_full;
    cmd.id = next_cmd_++;
    last_accepted_ = cmd.id;
    cmd.enqueue_time = eng_.now();
    if (cmd.barrier) ++resident_barriers_;
    if (cmd.priority == Priority::head_of_queue) {
      waiting_.push_front(std::move(cmd));
    } else {
      waiting_.push_back(std::move(cmd));
    }
    note_depth();
    if (!in_service_) start_next();
    return EnqueueResult::accepted;
  }

  CommandId last_accepted() const { return last_accepted_; }
  std::size_t occupancy() const { return waiting_.size() + (in_service_ ? 1 : 0); }
  bool full() const { return occupancy() >= cfg_.queue_depth; }
  bool busy() const { return in_service_.has_value(); }
  const std::deque<StorageCommand>& waiting() const { return waiting_; }
  const std::optional<StorageCommand>& in_service() const { return in_service_; }

  // Index into waiting() of the command the controller services next. Any
  // simple command ahead of the first non-simple one may go; a non-simple
  // command at the front goes alone.
  std::size_t select_next() {
    if (waiting_.front().priority != Priority::simple) return 0;
    std::size_t n = 1;
    while (n < waiting_.size() && waiting_[n].priority == Priority::simple) ++n;
    return n == 1 ? 0 : static_cast<std::size_t>(rng_() % n);
  }

  // ---- persistence --------------------------------------------------------

  CrashSpace crash_space() const {
    CrashSpace s;
    s.at = eng_.now();
    s.base = durable_;
    if (volatile_.empty()) return s;
    if (cfg_.supercap) {
      for (const auto& e : volatile_) s.base.push_back(e.write);
      return s;
    }
    if (cfg_.ignore_barrier) {
      for (const auto& e : volatile_) s.free.push_back(e.write);
      return s;
    }
    switch (cfg_.barrier_mode) {
      case BarrierMode::in_order_writeback: {
        const auto oldest = volatile_.front().epoch_tag;
        for (const auto& e : volatile_) {
          if (e.epoch_tag == oldest) s.free.push_back(e.write);
        }
        break;
      }
      case BarrierMode::transactional:
        break;
      case BarrierMode::lfs_recovery:
        for (const auto& e : volatile_) s.prefix.push_back(e.write);
        break;
    }
    return s;
  }

  CrashState crash() { return crash_space().sample(crash_rng_); }

  // Bumped whenever the durable or volatile set changes.
  std::uint64_t persist_version() const { return persist_version_; }

  const std::vector<BlockWrite>& durable() const { return durable_; }
  const std::vector<CacheEntry>& volatile_entries() const { return volatile_; }
  const std::vector<CacheEntry>& transferred() const { return transferred_; }

  // ---- statistics ---------------------------------------------------------

  const std::vector<CompletionRecord>& completions() const { return completions_; }
  std::uint64_t flushes() const { return flushes_; }
  std::uint64_t flush_commands() const { return flush_commands_; }
  std::uint64_t barrier_commands() const { return barrier_commands_; }
  std::size_t max_queue_depth() const { return max_depth_; }
  SimTime last_completion() const { return last_completion_; }

  // Time-weighted mean occupancy from the first enqueue to the last change.
  double mean_queue_depth() const {
    if (!first_enqueue_ || depth_changed_at_ <= *first_enqueue_) return static_cast<double>(max_depth_);
    return depth_area_ / static_cast<double>((depth_changed_at_ - *first_enqueue_).us());
  }

  void record_queue_series(bool on) { record_series_ = on; }
  const std::vector<QueueSample>& queue_series() const { return series_; }

 private:
  enum class Phase { flush, transfer, fua };

  SimTime transfer_time(const StorageCommand& c) const {
    std::uint64_t t = cfg_.t_transfer.us() * c.block_count();
    if (!cfg_.supercap && cfg_.barrier_overhead_pct > 0 && resident_barriers_ > 0) {
      t = t * (100 + cfg_.barrier_overhead_pct) / 100;
    }
    return SimTime(t);
  }

  void note_depth() {
    const SimTime now = eng_.now();
    if (!first_enqueue_) {
      first_enqueue_ = now;
    } else {
      depth_area_ += static_cast<double>(last_depth_) * static_cast<double>((now - depth_changed_at_).us());
    }
    depth_changed_at_ = now;
    last_depth_ = occupancy();
    max_depth_ = std::max(max_depth_, last_depth_);
    if (record_series_) series_.push_back({now, last_depth_});
  }

  void start_next() {
    if (waiting_.empty()) return;
    const std::size_t idx = select_next();
    in_service_ = std::move(waiting_[idx]);
    waiting_.erase(waiting_.begin() + static_cast<std::ptrdiff_t>(idx));
    if (in_service_->flush_first()) {
      run_phase(Phase::flush, cfg_.flush_latency(), "dev-flush");
    } else {
      run_phase(Phase::transfer, transfer_time(*in_service_), "dev-transfer");
    }
  }

  void run_phase(Phase p, SimTime d, const char* action) {
    eng_.schedule_in(d, [this, p] { finish_phase(p); }, action);
  }

  void finish_phase(Phase p) {
    StorageCommand& c = *in_service_;
    switch (p) {
      case Phase::flush:
        persist_all();
        ++flushes_;
        if (c.kind == CommandKind::flush) {
          ++flush_commands_;
          return complete(0);
        }
        return run_phase(Phase::transfer, transfer_time(c), "dev-transfer");
      case Phase::transfer: {
        last_seq_ = absorb(c);
        if (c.fua()) return run_phase(Phase::fua, cfg_.flush_latency(), "dev-fua");
        return complete(last_seq_);
      }
      case Phase::fua:
        return complete(last_seq_);
    }
  }

  // Moves the command's blocks into the cache; FUA blocks go to the surface.
  std::uint64_t absorb(const StorageCommand& c) {
    std::uint64_t seq = 0;
    ++persist_version_;
    for (const auto& w : c.req.blocks) {
      seq = ++transfer_seq_;
      CacheEntry e{w, seq, device_epoch_, c.req.id};
      transferred_.push_back(e);
      if (c.fua()) {
        durable_.push_back(w);
      } else {
        volatile_.push_back(e);
      }
    }
    if (c.barrier && !cfg_.ignore_barrier) ++device_epoch_;
    if (cfg_.supercap) return seq;
    if (cfg_.barrier_mode == BarrierMode::lfs_recovery) {
      if (volatile_.size() >= cfg_.segment_pages) persist_all();
    } else if (!volatile_.empty() && !tick_pending_) {
      tick_pending_ = true;
      eng_.schedule_in(cfg_.eviction_period(), [this] { background_writeback(); }, "dev-writeback");
    }
    return seq;
  }

  // One device epoch per tick, oldest first.
  void background_writeback() {
    tick_pending_ = false;
    if (volatile_.empty()) return;
    ++persist_version_;
    const auto oldest = volatile_.front().epoch_tag;
    std::size_t n = 0;
    while (n < volatile_.size() && volatile_[n].epoch_tag == oldest) durable_.push_back(volatile_[n++].write);
    volatile_.erase(volatile_.begin(), volatile_.begin() + static_cast<std::ptrdiff_t>(n));
    if (!volatile_.empty()) {
      tick_pending_ = true;
      eng_.schedule_in(cfg_.eviction_period(), [this] { background_writeback(); }, "dev-writeback");
    }
  }

  void persist_all() {
    if (volatile_.empty()) return;
    ++persist_version_;
    for (const auto& e : volatile_) durable_.push_back(e.write);
    volatile_.clear();
  }

  void complete(std::uint64_t seq) {
    StorageCommand c = std::move(*in_service_);
    in_service_.reset();
    if (c.barrier) {
      --resident_barriers_;
      ++barrier_commands_;
    }
    last_completion_ = eng_.now();
    CompletionRecord rec{eng_.now(), c.id, c.kind, c.req.id, c.priority, c.barrier, seq};
    completions_.push_back(rec);
    note_depth();
    start_next();
    if (handler_) handler_(c, rec);
  }

  Engine& eng_;
  DeviceConfig cfg_;
  std::mt19937_64 rng_;
  std::mt19937_64 crash_rng_;
  CompletionHandler handler_;

  std::deque<StorageCommand> waiting_;
  std::optional<StorageCommand> in_service_;
  CommandId next_cmd_ = 1;
  CommandId last_accepted_ = 0;
  std::size_t resident_barriers_ = 0;
  std::uint64_t last_seq_ = 0;

  std::vector<BlockWrite> durable_;
  std::vector<CacheEntry> volatile_;
  std::vector<CacheEntry> transferred_;
  std::uint64_t transfer_seq_ = 0;
  std::uint64_t device_epoch_ = 0;
  bool tick_pending_ = false;
  std::uint64_t persist_version_ = 0;

  std::vector<CompletionRecord> completions_;
  std::uint64_t flushes_ = 0;
  std::uint64_t flush_commands_ = 0;
  std::uint64_t barrier_commands_ = 0;
  SimTime last_completion_;

  std::optional<SimTime> first_enqueue_;
  SimTime depth_changed_at_;
  std::size_t last_depth_ = 0;
  std::size_t max_depth_ = 0;
  double depth_area_ = 0;
  bool record_series_ = false;
  std::vector<QueueSample> series_;
};

}  // namespace bsim
