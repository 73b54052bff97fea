#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bsim/block/request.hpp"
#include "bsim/sim/engine.hpp"

namespace bsim {

enum class Regime { ext4_dr, ext4_od, bfs_dr, bfs_od };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::ext4_dr: return "EXT4_DR";
    case Regime::ext4_od: return "EXT4_OD";
    case Regime::bfs_dr: return "BFS_DR";
    case Regime::bfs_od: return "BFS_OD";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  if (s == "EXT4_DR" || s == "ext4_dr") return Regime::ext4_dr;
  if (s == "EXT4_OD" || s == "ext4_od") return Regime::ext4_od;
  if (s == "BFS_DR" || s == "bfs_dr") return Regime::bfs_dr;
  if (s == "BFS_OD" || s == "bfs_od") return Regime::bfs_od;
  throw std::invalid_argument("unknown regime '" + std::string(s) + "'");
}

inline bool is_bfs(Regime r) { return r == Regime::bfs_dr || r == Regime::bfs_od; }

using FileId = std::uint32_t;

struct BufferPage {
  BlockAddr block;
  bool dirty = false;
  std::optional<TxnId> owner;
  std::uint64_t version = 0;
};

enum class TxnState { running, committing, durable };

inline std::string_view to_string(TxnState s) {
  switch (s) {
    case TxnState::running: return "running";
    case TxnState::committing: return "committing";
    case TxnState::durable: return "durable";
  }
  return "?";
}

// A page write parked until the committing transaction holding the page
// becomes durable.
struct ConflictEntry {
  BlockAddr page;
  TxnId blocker = 0;
  ActorId waiter = kNoActor;
  std::shared_ptr<TxnId> landed;  // transaction the page ends up in
};

struct JournalTransaction {
  TxnId id = 0;
  TxnState state = TxnState::running;
  std::vector<BlockAddr> pages;
  std::vector<ConflictEntry> conflicts;

  bool commit_requested = false;
  bool needs_flush = false;
  bool forced = false;

  std::vector<BlockWrite> d_blocks;
  std::vector<BlockWrite> jd_blocks;
  std::optional<BlockWrite> jc_block;
  // (page, version) images written to the journal area.
  std::vector<BlockWrite> logged;

  std::vector<ActorId> durable_waiters;
  std::vector<ActorId> dispatch_waiters;

  SimTime requested_at;
  SimTime sealed_at;
  SimTime jd_dispatched;
  SimTime jc_dispatched;
  std::optional<SimTime> jc_transferred;
  std::optional<SimTime> durable_at;
  bool flushed = false;

  bool has_page(BlockAddr a) const {
    for (auto p : pages) {
      if (p == a) return true;
    }
    return false;
  }
};

// Journal block map of one transaction, exported to the crash checker.
struct TxnLayout {
  TxnId id = 0;
  std::vector<BlockWrite> d;
  std::vector<BlockWrite> jd;
  BlockWrite jc;
  std::vector<BlockWrite> logged;
  bool durability = false;
};

}  // namespace bsim
