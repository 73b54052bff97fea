#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bsim/check/oracle.hpp"
#include "bsim/device/crash.hpp"
#include "bsim/fs/filesystem.hpp"
#include "bsim/stack.hpp"

namespace bsim {

struct Violation {
  std::string kind;
  SimTime crash_time;
  std::vector<BlockWrite> witness;
  std::string detail;
};

struct JournalVerdict {
  bool consistent = true;
  std::size_t recovered = 0;  // length of the valid committed prefix
  std::string kind;           // premature-commit | order-inversion
  std::optional<TxnId> txn;
  std::vector<BlockWrite> witness;
};

// JC_i durable requires every JD_i block, every D_i block (or a newer
// version of it), and JC_j for all j < i.
inline JournalVerdict check_journal_consistency(const CrashState& cs, const std::vector<TxnLayout>& layout) {
  JournalVerdict v;
  const DurableImage img = recover(cs);
  bool prefix_open = true;
  bool earlier_missing = false;
  for (const auto& t : layout) {
    const bool committed = cs.contains(t.jc);
    if (committed) {
      std::vector<BlockWrite> missing;
      for (const auto& w : t.jd) {
        if (!cs.contains(w)) missing.push_back(w);
      }
      for (const auto& w : t.d) {
        if (!covers(img, w)) missing.push_back(w);
      }
      if (!missing.empty()) {
        return JournalVerdict{false, v.recovered, "premature-commit", t.id, std::move(missing)};
      }
      if (earlier_missing) return JournalVerdict{false, v.recovered, "order-inversion", t.id, {t.jc}};
      if (prefix_open) ++v.recovered;
    } else {
      earlier_missing = true;
      prefix_open = false;
    }
  }
  return v;
}

// Durability and ordering promises made by returned sync calls.
class SyncContracts {
 public:
  SyncContracts(const std::vector<SyscallRecord>& calls, const std::vector<TxnLayout>& layout, Regime regime) {
    std::map<TxnId, BlockWrite> jc;
    for (const auto& t : layout) jc[t.id] = t.jc;
    // Without flushes EXT4_OD promises nothing about durability.
    const bool durable_regime = regime != Regime::ext4_od;
    for (const auto& c : calls) {
      const bool sync = c.call == Syscall::fsync || c.call == Syscall::fdatasync;
      if (sync && durable_regime && c.path != SyncPath::none) {
        Durable d{c.end, c.synced, std::nullopt};
        if (c.txn && (c.path == SyncPath::journal || c.path == SyncPath::forced)) {
          auto it = jc.find(*c.txn);
          if (it != jc.end()) d.jc = it->second;
        }
        durable_.push_back(std::move(d));
      }
      if (c.ordered && !c.dispatched.empty()) ordered_[c.file].push_back(Group{c.start, c.end, c.dispatched});
    }
  }

  // Appends violations for a crash state valid until `until` (exclusive).
  void check(const CrashState& cs, SimTime until, std::vector<Violation>& out) const {
    const DurableImage img = recover(cs);
    for (const auto& d : durable_) {
      if (!(d.end < until)) continue;
      std::vector<BlockWrite> missing;
      for (const auto& w : d.synced) {
        if (!covers(img, w)) missing.push_back(w);
      }
      if (d.jc && !cs.contains(*d.jc)) missing.push_back(*d.jc);
      if (!missing.empty()) {
        out.push_back(Violation{"durability", cs.crash_time, std::move(missing), "returned sync call lost data"});
        return;
      }
    }
    for (const auto& [file, groups] : ordered_) {
      std::optional<std::size_t> top;
      for (std::size_t j = groups.size(); j-- > 0;) {
        for (const auto& w : groups[j].blocks) {
          if (cs.contains(w)) {
            top = j;
            break;
          }
        }
        if (top) break;
      }
      if (!top) continue;
      for (std::size_t k = 0; k < *top; ++k) {
        if (!(groups[k].end <= groups[*top].start)) continue;
        std::vector<BlockWrite> missing;
        for (const auto& w : groups[k].blocks) {
          if (!covers(img, w)) missing.push_back(w);
        }
        if (!missing.empty()) {
          out.push_back(Violation{"ordering-contract", cs.crash_time, std::move(missing),
                                  "post-barrier write durable ahead of pre-barrier write in file " +
                                      std::to_string(file)});
          return;
        }
      }
    }
  }

 private:
  struct Durable {
    SimTime end;
    std::vector<BlockWrite> synced;
    std::optional<BlockWrite> jc;
  };
  struct Group {
    SimTime start;
    SimTime end;
    std::vector<BlockWrite> blocks;
  };
  std::vector<Durable> durable_;
  std::map<FileId, std::vector<Group>> ordered_;
};

// Records the device crash space after every event that changed it.
class CrashRecorder {
 public:
  struct Snapshot {
    SimTime from;
    CrashSpace space;
  };

  explicit CrashRecorder(IoStack& s) : stack_(s) {
    snaps_.push_back(Snapshot{s.engine.now(), s.device.crash_space()});
    s.engine.set_post_event_hook([this] { observe(); });
  }

  const std::vector<Snapshot>& snapshots() const { return snaps_; }

 private:
  void observe() {
    const auto v = stack_.device.persist_version();
    if (v == seen_) return;
    seen_ = v;
    snaps_.push_back(Snapshot{stack_.engine.now(), stack_.device.crash_space()});
  }

  IoStack& stack_;
  std::uint64_t seen_ = 0;
  std::vector<Snapshot> snaps_;
};

enum class Strategy { exhaustive, sampled };

struct CheckOptions {
  Strategy strategy = Strategy::exhaustive;
  std::uint64_t samples = 1000;
  std::uint64_t seed = 1;
  bool journal = true;
  bool contracts = true;
  std::size_t keep_violations = 16;
};

struct CheckReport {
  std::uint64_t snapshots = 0;
  std::uint64_t states_checked = 0;
  std::uint64_t violation_count = 0;
  std::map<std::string, std::uint64_t> by_kind;
  std::vector<Violation> violations;
  std::size_t max_recovered = 0;
  // Order conjuncts, compared per epoch.
  bool issue_dispatch = true;
  bool dispatch_transfer = true;
  bool transfer_persist = true;
  bool issue_persist = true;

  bool ok() const { return violation_count == 0; }
  bool conjunction() const { return issue_dispatch && dispatch_transfer && transfer_persist; }

  void add(Violation v, std::size_t keep) {
    ++violation_count;
    ++by_kind[v.kind];
    if (violations.size() < keep) violations.push_back(std::move(v));
  }

  void merge(const CheckReport& o) {
    snapshots += o.snapshots;
    states_checked += o.states_checked;
    violation_count += o.violation_count;
    for (const auto& [k, n] : o.by_kind) by_kind[k] += n;
    for (const auto& v : o.violations) {
      if (violations.size() < 16) violations.push_back(v);
    }
    max_recovered = std::max(max_recovered, o.max_recovered);
    issue_dispatch = issue_dispatch && o.issue_dispatch;
    dispatch_transfer = dispatch_transfer && o.dispatch_transfer;
    transfer_persist = transfer_persist && o.transfer_persist;
    issue_persist = issue_persist && o.issue_persist;
  }
};

// Visits crash states of a finished run: every state of every snapshot, or
// `samples` seeded draws.
template <typename F>
void enumerate_crash_states(const std::vector<CrashRecorder::Snapshot>& snaps, const CheckOptions& opt, F&& f) {
  auto until = [&](std::size_t i) { return i + 1 < snaps.size() ? snaps[i + 1].from : SimTime::max(); };
  if (opt.strategy == Strategy::exhaustive) {
    for (const auto& s : snaps) {
      if (!s.space.exhaustive_ok()) {
        throw ExhaustiveRefused("exhaustive enumeration refused at t=" + std::to_string(s.from.us()) + "us: " +
                                std::to_string(s.space.volatile_blocks()) + " unflushed blocks exceed the limit of " +
                                std::to_string(CrashSpace::kExhaustiveLimit));
      }
    }
    for (std::size_t i = 0; i < snaps.size(); ++i) {
      snaps[i].space.for_each([&](const CrashState& cs) { f(cs, until(i)); });
    }
    return;
  }
  std::mt19937_64 rng(opt.seed);
  for (std::uint64_t n = 0; n < opt.samples && !snaps.empty(); ++n) {
    const std::size_t i = static_cast<std::size_t>(rng() % snaps.size());
    f(snaps[i].space.sample(rng), until(i));
  }
}

inline CheckReport verify(const IoStack& stack, const CrashRecorder& rec, const CheckOptions& opt = {}) {
  CheckReport r;
  const OrderTrace trace = capture(stack.block);
  const auto cepochs = transfer_epochs(trace);
  const auto layout = stack.fs.layouts();
  const SyncContracts contracts(stack.fs.syscalls(), layout, stack.fs.regime());
  r.snapshots = rec.snapshots().size();
  r.issue_dispatch = issue_equals_dispatch(trace);
  r.dispatch_transfer = dispatch_equals_transfer(trace);
  enumerate_crash_states(rec.snapshots(), opt, [&](const CrashState& cs, SimTime until) {
    ++r.states_checked;
    if (!oracle_legal(trace, cs.durable)) {
      r.issue_persist = false;
      r.add(Violation{"epoch-order", cs.crash_time, cs.durable, "durable set is not epoch-prefix closed"},
            opt.keep_violations);
    }
    if (!transfer_equals_persist(cepochs, cs.durable)) r.transfer_persist = false;
    if (opt.journal) {
      auto v = check_journal_consistency(cs, layout);
      if (!v.consistent) {
        r.add(Violation{v.kind, cs.crash_time, v.witness, "transaction " + std::to_string(v.txn.value_or(0))},
              opt.keep_violations);
      }
      r.max_recovered = std::max(r.max_recovered, v.recovered);
    }
    if (opt.contracts) {
      std::vector<Violation> out;
      contracts.check(cs, until, out);
      for (auto& v : out) r.add(std::move(v), opt.keep_violations);
    }
  });
  return r;
}

}  // namespace bsim
