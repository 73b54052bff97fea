#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bsim/sim/engine.hpp"

namespace bsim {

// 4 KB block address.
struct BlockAddr {
  std::uint64_t value = 0;
  constexpr auto operator<=>(const BlockAddr&) const = default;
};

// One write of one block. Every write of a block gets a fresh version, so
// (addr, version) identifies a single persisted image.
struct BlockWrite {
  BlockAddr addr;
  std::uint64_t version = 0;
  constexpr auto operator<=>(const BlockWrite&) const = default;
};

using RequestId = std::uint64_t;
using EpochId = std::uint64_t;
using TxnId = std::uint64_t;
inline constexpr RequestId kNoRequest = std::numeric_limits<RequestId>::max();

enum class Attr : std::uint8_t { ordered = 1, barrier = 2, flush = 4, fua = 8 };

class Attrs {
 public:
  constexpr Attrs() = default;
  constexpr Attrs(Attr a) : bits_(static_cast<std::uint8_t>(a)) {}  // NOLINT(google-explicit-constructor)

  constexpr bool has(Attr a) const { return (bits_ & static_cast<std::uint8_t>(a)) != 0; }
  constexpr Attrs& set(Attr a) {
    bits_ |= static_cast<std::uint8_t>(a);
    return *this;
  }
  constexpr Attrs& clear(Attr a) {
    bits_ &= static_cast<std::uint8_t>(~static_cast<std::uint8_t>(a));
    return *this;
  }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const Attrs&) const = default;

  friend constexpr Attrs operator|(Attrs a, Attr b) { return a.set(b); }

  std::string str() const {
    std::string s;
    auto add = [&](Attr a, const char* n) {
      if (has(a)) {
        if (!s.empty()) s += '|';
        s += n;
      }
    };
    add(Attr::ordered, "ORDERED");
    add(Attr::barrier, "BARRIER");
    add(Attr::flush, "FLUSH");
    add(Attr::fua, "FUA");
    return s.empty() ? "NONE" : s;
  }

 private:
  std::uint8_t bits_ = 0;
};

constexpr Attrs operator|(Attr a, Attr b) { return Attrs(a).set(b); }

enum class Role : std::uint8_t { data, journal_descriptor, journal_commit, orderless };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::data: return "D";
    case Role::journal_descriptor: return "JD";
    case Role::journal_commit: return "JC";
    case Role::orderless: return "orderless";
  }
  return "?";
}

struct WriteRequest {
  RequestId id = kNoRequest;
  std::vector<BlockWrite> blocks;
  Attrs attrs;
  Role role = Role::data;
  ActorId issuer = kNoActor;
  std::uint64_t issue_seq = 0;
  // Set by the scheduler for ORDERED requests.
  std::optional<EpochId> epoch;
  // Constituent request ids when the scheduler merged requests.
  std::vector<RequestId> merged;

  bool ordered() const { return attrs.has(Attr::ordered); }
  bool barrier() const { return attrs.has(Attr::barrier); }

  std::vector<RequestId> constituents() const {
    std::vector<RequestId> ids{id};
    ids.insert(ids.end(), merged.begin(), merged.end());
    return ids;
  }

  // BARRIER implies ORDERED and a request carries at least one block.
  bool well_formed() const { return !blocks.empty() && (!barrier() || ordered()); }
};

}  // namespace bsim
