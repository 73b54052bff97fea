#pragma once

#include <cstdint>
#include <string_view>

#include "bsim/block/request.hpp"
#include "bsim/sim/time.hpp"

namespace bsim {

enum class Priority : std::uint8_t { simple, ordered, head_of_queue };

inline std::string_view to_string(Priority p) {
  switch (p) {
    case Priority::simple: return "simple";
    case Priority::ordered: return "ordered";
    case Priority::head_of_queue: return "head_of_queue";
  }
  return "?";
}

enum class CommandKind : std::uint8_t { write, flush };

using CommandId = std::uint64_t;

struct StorageCommand {
  CommandId id = 0;  // assigned by the device on acceptance
  CommandKind kind = CommandKind::write;
  WriteRequest req;  // empty for a standalone flush
  Priority priority = Priority::simple;
  bool barrier = false;
  SimTime enqueue_time;

  bool flush_first() const { return kind == CommandKind::flush || req.attrs.has(Attr::flush); }
  bool fua() const { return kind == CommandKind::write && req.attrs.has(Attr::fua); }
  std::size_t block_count() const { return kind == CommandKind::write ? req.blocks.size() : 0; }
};

inline StorageCommand make_flush_command() {
  StorageCommand c;
  c.kind = CommandKind::flush;
  c.priority = Priority::head_of_queue;
  return c;
}

enum class EnqueueResult { accepted, queue_full };

struct CompletionRecord {
  SimTime at;
  CommandId cmd = 0;
  CommandKind kind = CommandKind::write;
  RequestId req = kNoRequest;
  Priority priority = Priority::simple;
  bool barrier = false;
  // Position in transfer order C; zero for flushes.
  std::uint64_t transfer_seq = 0;
};

}  // namespace bsim
