#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "bsim/block/request.hpp"

namespace bsim {

enum class Discipline { fifo, merge_fifo, random };

struct SchedulerConfig {
  Discipline discipline = Discipline::merge_fifo;
  std::uint64_t seed = 1;
  // Mutation switches; both on in a correct stack.
  bool epoch_blocking = true;
  bool barrier_reassignment = true;
};

enum class SubmitResult { accepted, deferred };

struct Epoch {
  EpochId id = 0;
  std::vector<RequestId> members;
  RequestId delimiter = kNoRequest;
  bool closed = false;
};

struct MergeRefused : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline bool adjacent(const WriteRequest& a, const WriteRequest& b) {
  return !a.blocks.empty() && !b.blocks.empty() && a.blocks.back().addr.value + 1 == b.blocks.front().addr.value;
}

// Merge rule: the result is ORDERED if either side is. BARRIER never
// survives a merge; reassignment puts it back when the epoch drains.
inline WriteRequest merge(const WriteRequest& a, const WriteRequest& b) {
  if (!adjacent(a, b)) throw MergeRefused("requests are not adjacent in block space");
  if (a.ordered() && b.ordered() && a.epoch != b.epoch) {
    throw MergeRefused("ORDERED requests from different epochs");
  }
  WriteRequest m = a;
  m.blocks.insert(m.blocks.end(), b.blocks.begin(), b.blocks.end());
  if (b.ordered()) {
    m.attrs.set(Attr::ordered);
    if (!m.epoch) m.epoch = b.epoch;
  }
  m.attrs.clear(Attr::barrier);
  m.issue_seq = std::min(a.issue_seq, b.issue_seq);
  m.merged.push_back(b.id);
  m.merged.insert(m.merged.end(), b.merged.begin(), b.merged.end());
  return m;
}

inline bool mergeable(const WriteRequest& a, const WriteRequest& b) {
  constexpr auto special = [](const WriteRequest& r) {
    return r.barrier() || r.attrs.has(Attr::flush) || r.attrs.has(Attr::fua);
  };
  if (special(a) || special(b) || a.role != b.role || !adjacent(a, b)) return false;
  return !(a.ordered() && b.ordered() && a.epoch != b.epoch);
}

// Epoch-based IO scheduler with barrier reassignment. Requests inside one
// epoch and orderless requests are freely reorderable by the inner
// discipline; a barrier closes the epoch and stops admission until every
// ORDERED request of that epoch has left the queue.
class EpochScheduler {
 public:
  explicit EpochScheduler(SchedulerConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) { epochs_.push_back(Epoch{0, {}, kNoRequest, false}); }

  SubmitResult submit(WriteRequest r) {
    if (!r.well_formed()) throw std::invalid_argument("malformed write request");
    if (!accepting_) {
      deferred_.push_back(std::move(r));
      return SubmitResult::deferred;
    }
    insert(std::move(r));
    return SubmitResult::accepted;
  }

  std::optional<WriteRequest> schedule_next() {
    if (queue_.empty()) return std::nullopt;
    std::size_t idx = 0;
    if (cfg_.discipline == Discipline::random) idx = static_cast<std::size_t>(rng_() % queue_.size());
    return remove_at(idx);
  }

  // Removes a specific queued request (any constituent id of a merged one).
  std::optional<WriteRequest> take(RequestId id) {
    for (std::size_t i = 0; i < queue_.size(); ++i) {
      const auto& q = queue_[i];
      if (q.id == id || std::find(q.merged.begin(), q.merged.end(), id) != q.merged.end()) return remove_at(i);
    }
    return std::nullopt;
  }

  bool accepting() const { return accepting_; }
  bool empty() const { return queue_.empty(); }
  bool idle() const { return queue_.empty() && deferred_.empty(); }
  const std::deque<WriteRequest>& queue() const { return queue_; }
  const std::deque<WriteRequest>& deferred() const { return deferred_; }
  const std::vector<Epoch>& epochs() const { return epochs_; }
  EpochId current_epoch() const { return epochs_.back().id; }
  const SchedulerConfig& config() const { return cfg_; }

  std::size_t closed_epochs() const { return epochs_.size() - 1; }

 private:
  void insert(WriteRequest r) {
    Epoch& cur = epochs_.back();
    if (r.ordered()) {
      r.epoch = cur.id;
      cur.members.push_back(r.id);
      ++remaining_[cur.id];
    }
    const bool closes = r.barrier();
    if (closes) {
      if (cfg_.barrier_reassignment) r.attrs.clear(Attr::barrier);
      cur.closed = true;
      cur.delimiter = r.id;
      ++draining_;
      epochs_.push_back(Epoch{cur.id + 1, {}, kNoRequest, false});
      remaining_.push_back(0);
      if (cfg_.epoch_blocking) accepting_ = false;
    }
    // Back-merge into the tail request only.
    if (cfg_.discipline == Discipline::merge_fifo && !queue_.empty() && mergeable(queue_.back(), r)) {
      auto& q = queue_.back();
      if (q.ordered() && r.ordered()) --remaining_[*r.epoch];
      q = merge(q, r);
      return;
    }
    queue_.push_back(std::move(r));
  }

  WriteRequest remove_at(std::size_t idx) {
    WriteRequest r = std::move(queue_[idx]);
    queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(idx));
    if (r.ordered()) {
      const EpochId e = *r.epoch;
      if (--remaining_[e] == 0 && epochs_[e].closed) {
        --draining_;
        if (cfg_.barrier_reassignment) r.attrs.set(Attr::barrier);
        if (!accepting_ && draining_ == 0) resume_accepting();
      }
    }
    return r;
  }

  void resume_accepting() {
    accepting_ = true;
    // The rest of the backlog stays deferred, in order, once a barrier blocks again.
    while (accepting_ && !deferred_.empty()) {
      WriteRequest r = std::move(deferred_.front());
      deferred_.pop_front();
      insert(std::move(r));
    }
  }

  SchedulerConfig cfg_;
  std::mt19937_64 rng_;
  bool accepting_ = true;
  std::deque<WriteRequest> queue_;
  std::deque<WriteRequest> deferred_;
  std::vector<Epoch> epochs_;
  std::vector<std::size_t> remaining_{0};
  // Closed epochs with ORDERED requests still queued.
  std::size_t draining_ = 0;
};

}  // namespace bsim
