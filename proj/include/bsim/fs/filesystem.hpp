#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bsim/block/dispatcher.hpp"
#include "bsim/device/config.hpp"
#include "bsim/fs/journal.hpp"
#include "bsim/sim/engine.hpp"
#include "bsim/sim/task.hpp"

namespace bsim {

struct FsConfig {
  Regime regime = Regime::bfs_dr;
  // mtime granularity; a write in a new tick dirties the inode.
  SimTime timer_tick = SimTime::millis(10);
  // Periodic background writeback of dirty data pages; zero disables it.
  SimTime writeback_period{0};
  // Mutation switch: EXT4_DR writes JC with FLUSH|FUA rather than FUA alone.
  bool flush_before_commit = true;
  // Keep per-call synced sets for the crash checker.
  bool record_contracts = false;

  std::uint64_t meta_base = 1'000;
  std::uint64_t journal_base = 1'000'000;
  std::uint64_t data_base = 10'000'000;
  std::uint64_t file_stride = 1'000'000;
};

enum class Syscall { write, touch, fsync, fdatasync, fbarrier, fdatabarrier };

inline std::string_view to_string(Syscall s) {
  switch (s) {
    case Syscall::write: return "write";
    case Syscall::touch: return "touch";
    case Syscall::fsync: return "fsync";
    case Syscall::fdatasync: return "fdatasync";
    case Syscall::fbarrier: return "fbarrier";
    case Syscall::fdatabarrier: return "fdatabarrier";
  }
  return "?";
}

// How a sync call was serviced.
enum class SyncPath { none, data, journal, forced };

inline std::string_view to_string(SyncPath p) {
  switch (p) {
    case SyncPath::none: return "none";
    case SyncPath::data: return "data";
    case SyncPath::journal: return "journal";
    case SyncPath::forced: return "forced";
  }
  return "?";
}

struct SyscallRecord {
  Syscall call = Syscall::write;
  ActorId actor = kNoActor;
  FileId file = 0;
  SimTime start;
  SimTime end;
  std::uint64_t wakeups = 0;
  SyncPath path = SyncPath::none;
  std::optional<TxnId> txn;
  // Data blocks this call handed to the block layer, and whether ORDERED.
  std::vector<BlockWrite> dispatched;
  bool ordered = false;
  // Latest version of every data page of the file at call entry.
  std::vector<BlockWrite> synced;
};

struct File {
  FileId id = 0;
  std::uint64_t size = 0;
  std::uint64_t data_base = 0;
  BlockAddr inode;
  BlockAddr bitmap;
  std::set<std::uint64_t> dirty;
  std::uint64_t mtime_tick = 0;
  std::optional<TxnId> meta_txn;
  std::optional<TxnId> alloc_txn;
  std::map<std::uint64_t, std::uint64_t> written;  // offset -> version, contract mode only
};

// Single-owner countdown used by an actor waiting on several completions.
class Latch {
 public:
  explicit Latch(Engine& eng) : eng_(eng) {}
  void add() { ++pending_; }
  void arrive() {
    if (--pending_ == 0 && waiter_ != kNoActor) eng_.wake(std::exchange(waiter_, kNoActor));
  }
  bool done() const { return pending_ == 0; }
  Task<void> wait(ActorId who, const char* reason) {
    if (pending_ == 0) co_return;
    waiter_ = who;
    co_await eng_.suspend(who, reason);
  }

 private:
  Engine& eng_;
  std::size_t pending_ = 0;
  ActorId waiter_ = kNoActor;
};

// Ordered-mode journaling filesystem. EXT4 regimes run one journal actor;
// BFS regimes split commit into a commit actor and a flush actor.
class FileSystem {
 public:
  FileSystem(Engine& eng, BlockLayer& blk, FsConfig cfg, HostTiming host)
      : eng_(eng), blk_(blk), cfg_(cfg), host_(host) {
    txns_.push_back(JournalTransaction{});
    journal_head_ = cfg_.journal_base;
  }
  FileSystem(const FileSystem&) = delete;
  FileSystem& operator=(const FileSystem&) = delete;

  const FsConfig& config() const { return cfg_; }
  Regime regime() const { return cfg_.regime; }

  // Files must be created before start().
  FileId create_file(std::uint64_t preallocated_blocks = 0) {
    File f;
    f.id = static_cast<FileId>(files_.size());
    f.size = preallocated_blocks;
    f.data_base = cfg_.data_base + cfg_.file_stride * f.id;
    f.inode = BlockAddr{cfg_.meta_base + 2ull * f.id};
    f.bitmap = BlockAddr{cfg_.meta_base + 2ull * f.id + 1};
    files_.push_back(std::move(f));
    return files_.back().id;
  }

  void start() {
    if (is_bfs(cfg_.regime)) {
      commit_ = eng_.add_actor("bfs-commit");
      flush_ = eng_.add_actor("bfs-flush");
      eng_.start(commit_, commit_loop());
      eng_.start(flush_, flush_loop());
    } else {
      jbd_ = eng_.add_actor("jbd");
      eng_.start(jbd_, jbd_loop());
    }
    if (cfg_.writeback_period.us() > 0) {
      flusher_ = eng_.add_actor("writeback");
      eng_.start(flusher_, writeback_loop());
    }
  }

  // Lets the daemons exit once their pending work is done.
  void shutdown() {
    stopping_ = true;
    for (ActorId a : {jbd_, commit_, flush_}) poke(a);
  }

  // ---- syscalls -----------------------------------------------------------

  Task<void> write(ActorId who, FileId f, std::uint64_t offset, std::uint64_t nblocks) {
    SyscallRecord rec = begin(Syscall::write, who, f);
    co_await eng_.delay(who, host_.t_write, "write");
    File& file = files_.at(f);
    for (std::uint64_t i = 0; i < nblocks; ++i) {
      BufferPage& p = pages_[file.data_base + offset + i];
      p.block = BlockAddr{file.data_base + offset + i};
      p.version = ++version_;
      p.dirty = true;
      file.dirty.insert(offset + i);
      if (cfg_.record_contracts) file.written[offset + i] = p.version;
    }
    const bool alloc = offset + nblocks > file.size;
    if (alloc) file.size = offset + nblocks;
    const bool tick = update_mtime(file);
    if (alloc) {
      co_await touch_meta(who, f, file.inode, true);
      co_await touch_meta(who, f, files_.at(f).bitmap, true);
    } else if (tick) {
      co_await touch_meta(who, f, file.inode, false);
    }
    finish(std::move(rec));
  }

  // Metadata-only update (setattr).
  Task<void> touch(ActorId who, FileId f) {
    SyscallRecord rec = begin(Syscall::touch, who, f);
    co_await eng_.delay(who, host_.t_write, "touch");
    co_await touch_meta(who, f, files_.at(f).inode, false);
    finish(std::move(rec));
  }

  Task<SimTime> fsync(ActorId who, FileId f) {
    SyscallRecord rec = begin(Syscall::fsync, who, f);
    if (pending(files_.at(f).meta_txn)) {
      co_await journal_sync(who, f, rec);
    } else {
      co_await data_sync(who, f, rec);
    }
    co_return finish(std::move(rec));
  }

  Task<SimTime> fdatasync(ActorId who, FileId f) {
    SyscallRecord rec = begin(Syscall::fdatasync, who, f);
    if (pending(files_.at(f).alloc_txn)) {
      co_await journal_sync(who, f, rec);
    } else {
      co_await data_sync(who, f, rec);
    }
    co_return finish(std::move(rec));
  }

  Task<SimTime> fbarrier(ActorId who, FileId f) {
    require_bfs("fbarrier");
    SyscallRecord rec = begin(Syscall::fbarrier, who, f);
    if (pending(files_.at(f).meta_txn)) {
      auto runs = take_dirty(who, f, rec);
      rec.ordered = true;
      co_await dispatch_runs(who, std::move(runs), Attrs(Attr::ordered), Attrs(Attr::ordered), nullptr, rec);
      JournalTransaction& t = request_commit(false);
      t.d_blocks.insert(t.d_blocks.end(), rec.dispatched.begin(), rec.dispatched.end());
      t.dispatch_waiters.push_back(who);
      rec.txn = t.id;
      rec.path = SyncPath::journal;
      poke(commit_);
      co_await eng_.suspend(who, "fbarrier-commit-dispatch");
    } else {
      co_await data_barrier(who, f, rec);
    }
    co_return finish(std::move(rec));
  }

  Task<SimTime> fdatabarrier(ActorId who, FileId f) {
    require_bfs("fdatabarrier");
    SyscallRecord rec = begin(Syscall::fdatabarrier, who, f);
    co_await data_barrier(who, f, rec);
    co_return finish(std::move(rec));
  }

  // ---- inspection ---------------------------------------------------------

  const std::vector<SyscallRecord>& syscalls() const { return syscalls_; }
  const std::vector<JournalTransaction>& transactions() const { return txns_; }
  const std::vector<File>& files() const { return files_; }
  TxnId running() const { return running_; }
  std::uint64_t conflicts_seen() const { return conflicts_seen_; }
  const BufferPage* page(BlockAddr a) const {
    auto it = pages_.find(a.value);
    return it == pages_.end() ? nullptr : &it->second;
  }
  ActorId writeback_actor() const { return flusher_; }
  std::vector<ActorId> daemons() const {
    std::vector<ActorId> out;
    for (ActorId a : {jbd_, commit_, flush_, flusher_}) {
      if (a != kNoActor) out.push_back(a);
    }
    return out;
  }

  // Journal block map of every sealed transaction.
  std::vector<TxnLayout> layouts() const {
    std::vector<TxnLayout> out;
    for (const auto& t : txns_) {
      if (!t.jc_block) continue;
      out.push_back(TxnLayout{t.id, t.d_blocks, t.jd_blocks, *t.jc_block, t.logged, t.needs_flush});
    }
    return out;
  }

 private:
  SyscallRecord begin(Syscall c, ActorId who, FileId f) {
    SyscallRecord r;
    r.call = c;
    r.actor = who;
    r.file = f;
    r.start = eng_.now();
    r.wakeups = eng_.actor(who).voluntary_switches;
    if (cfg_.record_contracts && (c == Syscall::fsync || c == Syscall::fdatasync)) {
      const File& file = files_.at(f);
      for (const auto& [off, v] : file.written) r.synced.push_back(BlockWrite{BlockAddr{file.data_base + off}, v});
    }
    return r;
  }

  SimTime finish(SyscallRecord r) {
    r.end = eng_.now();
    r.wakeups = eng_.actor(r.actor).voluntary_switches - r.wakeups;
    const SimTime lat = r.end - r.start;
    syscalls_.push_back(std::move(r));
    return lat;
  }

  void require_bfs(const char* call) const {
    if (!is_bfs(cfg_.regime)) {
      throw std::invalid_argument(std::string(call) + " requires a BarrierFS regime, got " +
                                  std::string(to_string(cfg_.regime)));
    }
  }

  bool update_mtime(File& f) {
    const std::uint64_t tick = cfg_.timer_tick.us() == 0 ? eng_.now().us() + 1 : eng_.now().us() / cfg_.timer_tick.us();
    if (tick == f.mtime_tick) return false;
    f.mtime_tick = tick;
    return true;
  }

  bool pending(const std::optional<TxnId>& t) const { return t && txns_.at(*t).state != TxnState::durable; }

  // Inserts a metadata page into the running transaction, parking the
  // caller on the conflict-page list while a committing transaction holds it.
  Task<void> touch_meta(ActorId who, FileId f, BlockAddr a, bool alloc) {
    BufferPage& p = pages_[a.value];
    p.block = a;
    TxnId landed = running_;
    if (p.owner && *p.owner != running_ && txns_.at(*p.owner).state != TxnState::durable) {
      auto slot = std::make_shared<TxnId>(running_);
      txns_.at(running_).conflicts.push_back(ConflictEntry{a, *p.owner, who, slot});
      ++conflicts_seen_;
      co_await eng_.suspend(who, "page-conflict");
      landed = *slot;
    } else {
      insert_page(a);
    }
    File& file = files_.at(f);
    file.meta_txn = landed;
    if (alloc) file.alloc_txn = landed;
  }

  void insert_page(BlockAddr a) {
    BufferPage& p = pages_[a.value];
    JournalTransaction& r = txns_.at(running_);
    if (!p.owner || *p.owner != running_) {
      p.owner = running_;
      r.pages.push_back(a);
    }
    p.version = ++version_;
    p.dirty = true;
  }

  // Contiguous runs of the file's dirty data pages, now under writeback.
  std::vector<WriteRequest> take_dirty(ActorId who, FileId f, SyscallRecord& rec) {
    File& file = files_.at(f);
    std::vector<WriteRequest> runs;
    std::uint64_t prev = 0;
    for (std::uint64_t off : file.dirty) {
      const std::uint64_t addr = file.data_base + off;
      BufferPage& p = pages_[addr];
      p.dirty = false;
      if (runs.empty() || off != prev + 1) {
        runs.emplace_back();
        runs.back().role = Role::data;
        runs.back().issuer = who;
      }
      runs.back().blocks.push_back(BlockWrite{BlockAddr{addr}, p.version});
      rec.dispatched.push_back(runs.back().blocks.back());
      prev = off;
    }
    file.dirty.clear();
    return runs;
  }

  // Dispatches runs, charging t_D per request. `last` applies to the final one.
  Task<void> dispatch_runs(ActorId who, std::vector<WriteRequest> runs, Attrs each, Attrs last,
                           std::shared_ptr<Latch> latch, SyscallRecord&) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      runs[i].attrs = i + 1 == runs.size() ? last : each;
      co_await submit(who, std::move(runs[i]), latch);
    }
  }

  Task<void> submit(ActorId who, WriteRequest r, std::shared_ptr<Latch> latch) {
    co_await eng_.delay(who, host_.t_dispatch, "dispatch");
    r.issuer = who;
    if (latch) {
      latch->add();
      blk_.submit(std::move(r), [latch] { latch->arrive(); });
    } else {
      blk_.submit(std::move(r));
    }
  }

  Task<void> flush_and_wait(ActorId who, const char* reason) {
    co_await eng_.delay(who, host_.t_dispatch, "dispatch");
    auto latch = std::make_shared<Latch>(eng_);
    latch->add();
    blk_.flush([latch] { latch->arrive(); });
    co_await latch->wait(who, reason);
  }

  JournalTransaction& request_commit(bool durability) {
    JournalTransaction& r = txns_.at(running_);
    if (!r.commit_requested) {
      r.commit_requested = true;
      r.requested_at = eng_.now();
    }
    r.needs_flush = r.needs_flush || durability;
    return r;
  }

  // fsync/fdatasync that must commit the journal.
  Task<void> journal_sync(ActorId who, FileId f, SyscallRecord& rec) {
    rec.path = SyncPath::journal;
    auto runs = take_dirty(who, f, rec);
    if (is_bfs(cfg_.regime)) {
      rec.ordered = true;
      co_await dispatch_runs(who, std::move(runs), Attrs(Attr::ordered), Attrs(Attr::ordered), nullptr, rec);
    } else {
      auto latch = std::make_shared<Latch>(eng_);
      co_await dispatch_runs(who, std::move(runs), Attrs{}, Attrs{}, latch, rec);
      co_await latch->wait(who, "wait-on-transfer");
    }
    JournalTransaction& t = request_commit(true);
    t.d_blocks.insert(t.d_blocks.end(), rec.dispatched.begin(), rec.dispatched.end());
    t.durable_waiters.push_back(who);
    rec.txn = t.id;
    poke(is_bfs(cfg_.regime) ? commit_ : jbd_);
    co_await eng_.suspend(who, "wait-on-commit");
  }

  // fsync/fdatasync without a journal commit.
  Task<void> data_sync(ActorId who, FileId f, SyscallRecord& rec) {
    auto runs = take_dirty(who, f, rec);
    const bool bfs = is_bfs(cfg_.regime);
    if (runs.empty()) {
      if (bfs) {
        rec.path = SyncPath::forced;
        JournalTransaction& t = request_commit(true);
        t.forced = t.forced || t.pages.empty();
        t.durable_waiters.push_back(who);
        rec.txn = t.id;
        poke(commit_);
        co_await eng_.suspend(who, "wait-on-commit");
      } else if (cfg_.regime == Regime::ext4_dr) {
        rec.path = SyncPath::data;
        co_await flush_and_wait(who, "wait-on-flush");
      }
      co_return;
    }
    rec.path = SyncPath::data;
    auto latch = std::make_shared<Latch>(eng_);
    if (bfs) {
      rec.ordered = true;
      co_await dispatch_runs(who, std::move(runs), Attrs(Attr::ordered), Attr::ordered | Attr::barrier, latch, rec);
    } else {
      co_await dispatch_runs(who, std::move(runs), Attrs{}, Attrs{}, latch, rec);
    }
    co_await latch->wait(who, "wait-on-transfer");
    if (bfs || cfg_.regime == Regime::ext4_dr) co_await flush_and_wait(who, "wait-on-flush");
  }

  // fdatabarrier semantics: never blocks the caller.
  Task<void> data_barrier(ActorId who, FileId f, SyscallRecord& rec) {
    auto runs = take_dirty(who, f, rec);
    if (runs.empty()) {
      rec.path = SyncPath::forced;
      JournalTransaction& t = request_commit(false);
      t.forced = t.forced || t.pages.empty();
      rec.txn = t.id;
      poke(commit_);
      co_return;
    }
    rec.path = SyncPath::data;
    rec.ordered = true;
    co_await dispatch_runs(who, std::move(runs), Attrs(Attr::ordered), Attr::ordered | Attr::barrier, nullptr, rec);
  }

  // ---- journal machinery --------------------------------------------------

  void poke(ActorId a) {
    if (a == kNoActor) return;
    auto it = idle_.find(a);
    if (it != idle_.end() && it->second) {
      it->second = false;
      eng_.wake(a);
    }
  }

  Task<void> idle(ActorId a, const char* reason) {
    idle_[a] = true;
    co_await eng_.suspend(a, reason);
  }

  // running -> committing; lays out JD and JC in the journal area.
  TxnId seal() {
    const TxnId id = running_;
    {
      JournalTransaction& t = txns_.at(id);
      t.state = TxnState::committing;
      t.sealed_at = eng_.now();
      for (BlockAddr a : t.pages) t.logged.push_back(BlockWrite{a, pages_.at(a.value).version});
      const std::size_t jd = 1 + (t.pages.size() + 3) / 4;
      for (std::size_t i = 0; i < jd; ++i) t.jd_blocks.push_back(BlockWrite{BlockAddr{journal_head_++}, ++version_});
      t.jc_block = BlockWrite{BlockAddr{journal_head_++}, ++version_};
    }
    JournalTransaction next;
    next.id = id + 1;
    txns_.push_back(std::move(next));
    running_ = id + 1;
    committing_.push_back(id);
    return id;
  }

  WriteRequest journal_request(TxnId id, Role role, Attrs attrs, ActorId who) const {
    const JournalTransaction& t = txns_.at(id);
    WriteRequest r;
    r.role = role;
    r.attrs = attrs;
    r.issuer = who;
    if (role == Role::journal_commit) {
      r.blocks.push_back(*t.jc_block);
    } else {
      r.blocks = t.jd_blocks;
    }
    return r;
  }

  void make_durable(TxnId id) {
    if (committing_.empty() || committing_.front() != id) {
      throw SimulationFault("transaction " + std::to_string(id) + " retired out of order");
    }
    committing_.pop_front();
    JournalTransaction& t = txns_.at(id);
    t.state = TxnState::durable;
    t.durable_at = eng_.now();
    for (BlockAddr a : t.pages) {
      BufferPage& p = pages_.at(a.value);
      if (p.owner == id) p.owner.reset();
    }
    resolve_conflicts(id);
    for (ActorId w : std::exchange(t.durable_waiters, {})) eng_.wake(w);
  }

  // Moves pages parked behind `id` into the running transaction.
  void resolve_conflicts(TxnId id) {
    auto& list = txns_.at(running_).conflicts;
    bool changed = false;
    for (auto it = list.begin(); it != list.end();) {
      if (it->blocker != id) {
        ++it;
        continue;
      }
      insert_page(it->page);
      *it->landed = running_;
      eng_.wake(it->waiter);
      it = list.erase(it);
      changed = true;
    }
    if (changed && list.empty()) poke(commit_);
  }

  Task<void> jbd_loop() {
    const ActorId me = jbd_;
    while (true) {
      if (!txns_.at(running_).commit_requested) {
        if (stopping_) co_return;
        co_await idle(me, "idle");
        continue;
      }
      if (!txns_.at(running_).conflicts.empty()) {
        throw SimulationFault("EXT4 commit found unresolved page conflicts");
      }
      const TxnId id = seal();
      auto jd = std::make_shared<Latch>(eng_);
      co_await submit(me, journal_request(id, Role::journal_descriptor, Attrs{}, me), jd);
      txns_.at(id).jd_dispatched = eng_.now();
      co_await jd->wait(me, "wait-on-transfer");
      Attrs jc_attrs;
      if (cfg_.regime == Regime::ext4_dr) {
        jc_attrs = cfg_.flush_before_commit ? Attr::flush | Attr::fua : Attrs(Attr::fua);
      }
      auto jc = std::make_shared<Latch>(eng_);
      co_await submit(me, journal_request(id, Role::journal_commit, jc_attrs, me), jc);
      txns_.at(id).jc_dispatched = eng_.now();
      co_await jc->wait(me, "wait-on-commit-block");
      txns_.at(id).jc_transferred = eng_.now();
      txns_.at(id).flushed = cfg_.regime == Regime::ext4_dr;
      make_durable(id);
    }
  }

  Task<void> commit_loop() {
    const ActorId me = commit_;
    const Attrs barrier = Attr::ordered | Attr::barrier;
    while (true) {
      const JournalTransaction& r = txns_.at(running_);
      if (!r.commit_requested) {
        if (stopping_) break;
        co_await idle(me, "idle");
        continue;
      }
      if (!r.conflicts.empty()) {
        co_await idle(me, "conflict-page-list");
        continue;
      }
      const TxnId id = seal();
      co_await submit(me, journal_request(id, Role::journal_descriptor, barrier, me), nullptr);
      txns_.at(id).jd_dispatched = eng_.now();
      co_await eng_.delay(me, host_.t_dispatch, "dispatch");
      WriteRequest jc = journal_request(id, Role::journal_commit, barrier, me);
      jc.issuer = me;
      blk_.submit(std::move(jc), [this, id] {
        txns_.at(id).jc_transferred = eng_.now();
        poke(flush_);
      });
      txns_.at(id).jc_dispatched = eng_.now();
      for (ActorId w : std::exchange(txns_.at(id).dispatch_waiters, {})) eng_.wake(w);
    }
    poke(flush_);
  }

  Task<void> flush_loop() {
    const ActorId me = flush_;
    while (true) {
      if (committing_.empty() || !txns_.at(committing_.front()).jc_transferred) {
        if (stopping_ && committing_.empty() && eng_.actor(commit_).state == ActorState::terminated) co_return;
        co_await idle(me, "idle");
        continue;
      }
      const TxnId id = committing_.front();
      if (txns_.at(id).needs_flush) {
        co_await flush_and_wait(me, "wait-on-flush");
        txns_.at(id).flushed = true;
      }
      make_durable(id);
    }
  }

  Task<void> writeback_loop() {
    const ActorId me = flusher_;
    while (!stopping_) {
      co_await eng_.delay(me, cfg_.writeback_period, "writeback-sleep");
      if (stopping_) break;
      for (std::size_t f = 0; f < files_.size(); ++f) {
        SyscallRecord scratch;
        for (auto& r : take_dirty(me, static_cast<FileId>(f), scratch)) {
          r.issuer = me;
          blk_.submit(std::move(r));
        }
      }
    }
  }

  Engine& eng_;
  BlockLayer& blk_;
  FsConfig cfg_;
  HostTiming host_;

  std::vector<File> files_;
  std::unordered_map<std::uint64_t, BufferPage> pages_;
  std::vector<JournalTransaction> txns_;
  std::deque<TxnId> committing_;
  TxnId running_ = 0;
  std::uint64_t version_ = 0;
  std::uint64_t journal_head_ = 0;
  std::uint64_t conflicts_seen_ = 0;

  ActorId jbd_ = kNoActor;
  ActorId commit_ = kNoActor;
  ActorId flush_ = kNoActor;
  ActorId flusher_ = kNoActor;
  std::unordered_map<ActorId, bool> idle_;
  bool stopping_ = false;
  std::vector<SyscallRecord> syscalls_;
};

}  // namespace bsim
