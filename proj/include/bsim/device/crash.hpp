#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsim/block/request.hpp"
#include "bsim/sim/time.hpp"

namespace bsim {

// Blocks durable at a power-loss instant.
struct CrashState {
  SimTime crash_time;
  std::vector<BlockWrite> durable;  // sorted, unique

  bool contains(const BlockWrite& w) const { return std::binary_search(durable.begin(), durable.end(), w); }
};

// Recovered disk image: newest durable version per address.
using DurableImage = std::map<std::uint64_t, std::uint64_t>;

inline DurableImage recover(const CrashState& cs) {
  DurableImage img;
  for (const auto& w : cs.durable) {
    auto& v = img[w.addr.value];
    v = std::max(v, w.version);
  }
  return img;
}

// True when the image holds `w` or a newer version of its address.
inline bool covers(const DurableImage& img, const BlockWrite& w) {
  auto it = img.find(w.addr.value);
  return it != img.end() && it->second >= w.version;
}

struct ExhaustiveRefused : std::length_error {
  using std::length_error::length_error;
};

// Every state the device can fall into at one instant:
// base ∪ (any subset of `free`) ∪ (any prefix of `prefix`).
struct CrashSpace {
  SimTime at;
  std::vector<BlockWrite> base;
  std::vector<BlockWrite> free;
  std::vector<BlockWrite> prefix;

  static constexpr std::size_t kExhaustiveLimit = 20;

  std::size_t volatile_blocks() const { return free.size() + prefix.size(); }

  std::uint64_t count() const {
    if (free.size() >= 63) return UINT64_MAX;
    return (std::uint64_t{1} << free.size()) * (prefix.size() + 1);
  }

  bool exhaustive_ok() const { return free.size() <= kExhaustiveLimit && count() <= (std::uint64_t{1} << kExhaustiveLimit); }

  CrashState make(std::uint64_t mask, std::size_t prefix_len) const {
    CrashState cs{at, base};
    for (std::size_t i = 0; i < free.size(); ++i) {
      if (mask >> i & 1u) cs.durable.push_back(free[i]);
    }
    cs.durable.insert(cs.durable.end(), prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(prefix_len));
    normalize(cs);
    return cs;
  }

  template <typename F>
  void for_each(F&& f) const {
    if (!exhaustive_ok()) {
      throw ExhaustiveRefused("crash space too large for exhaustive enumeration: " + std::to_string(free.size()) +
                              " free blocks, " + std::to_string(prefix.size()) + " prefix blocks (limit " +
                              std::to_string(kExhaustiveLimit) + ")");
    }
    const std::uint64_t masks = std::uint64_t{1} << free.size();
    for (std::uint64_t m = 0; m < masks; ++m) {
      for (std::size_t p = 0; p <= prefix.size(); ++p) f(make(m, p));
    }
  }

  CrashState sample(std::mt19937_64& rng) const {
    CrashState cs{at, base};
    for (const auto& w : free) {
      if (rng() & 1u) cs.durable.push_back(w);
    }
    const std::size_t p = prefix.empty() ? 0 : static_cast<std::size_t>(rng() % (prefix.size() + 1));
    cs.durable.insert(cs.durable.end(), prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(p));
    normalize(cs);
    return cs;
  }

  CrashState everything() const {
    CrashState cs{at, base};
    cs.durable.insert(cs.durable.end(), free.begin(), free.end());
    cs.durable.insert(cs.durable.end(), prefix.begin(), prefix.end());
    normalize(cs);
    return cs;
  }

  static void normalize(CrashState& cs) {
    std::sort(cs.durable.begin(), cs.durable.end());
    cs.durable.erase(std::unique(cs.durable.begin(), cs.durable.end()), cs.durable.end());
  }
};

}  // namespace bsim
