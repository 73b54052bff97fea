#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "bsim/sim/time.hpp"

namespace bsim {

enum class BarrierMode { in_order_writeback, transactional, lfs_recovery };

inline std::string_view to_string(BarrierMode m) {
  switch (m) {
    case BarrierMode::in_order_writeback: return "in_order_writeback";
    case BarrierMode::transactional: return "transactional";
    case BarrierMode::lfs_recovery: return "lfs_recovery";
  }
  return "?";
}

inline BarrierMode parse_barrier_mode(std::string_view s) {
  if (s == "in_order_writeback") return BarrierMode::in_order_writeback;
  if (s == "transactional") return BarrierMode::transactional;
  if (s == "lfs_recovery") return BarrierMode::lfs_recovery;
  throw std::invalid_argument("unknown barrier_mode '" + std::string(s) + "'");
}

struct DeviceConfig {
  std::size_t queue_depth = 16;
  SimTime t_transfer{70};  // DMA per 4 KB block
  SimTime t_flush{292};    // full cache flush
  SimTime t_eps{22};       // flush on a power-loss-protected device
  bool supercap = false;
  BarrierMode barrier_mode = BarrierMode::lfs_recovery;
  unsigned barrier_overhead_pct = 0;
  std::size_t segment_pages = 64;
  // Transactional write-back commit penalty, applied to flushes.
  unsigned transactional_overhead_pct = 0;
  // Background write-back cadence; zero means t_flush / 8.
  SimTime eviction_interval{0};
  std::uint64_t seed = 1;
  // Fault injection: the controller ignores barrier flags when persisting.
  bool ignore_barrier = false;

  SimTime flush_latency() const {
    SimTime t = supercap ? t_eps : t_flush;
    if (!supercap && barrier_mode == BarrierMode::transactional && transactional_overhead_pct > 0) {
      t = SimTime(t.us() * (100 + transactional_overhead_pct) / 100);
    }
    return t;
  }

  SimTime eviction_period() const {
    if (eviction_interval.us() > 0) return eviction_interval;
    return SimTime(std::max<std::uint64_t>(1, t_flush.us() / 8));
  }

  void validate() const {
    if (queue_depth < 1) throw std::invalid_argument("queue_depth must be >= 1");
    if (barrier_overhead_pct > 100) throw std::invalid_argument("barrier_overhead_pct must be in [0, 100]");
    if (segment_pages < 1) throw std::invalid_argument("segment_pages must be >= 1");
    if (t_transfer.us() == 0) throw std::invalid_argument("t_transfer must be positive");
  }
};

// Host-side latencies measured on the platform that carries the device.
struct HostTiming {
  SimTime t_dispatch{39};         // t_D
  SimTime t_context_switch{160};  // t_cs
  SimTime t_write{10};            // write() into the page cache, per call
};

struct Profile {
  std::string name;
  DeviceConfig device;
  HostTiming host;
};

namespace profiles {

// Mobile UFS 2.0: QD 16, single channel, LFS-style barrier recovery.
inline Profile ufs() {
  Profile p{"ufs", {}, {}};
  p.device.queue_depth = 16;
  p.device.t_transfer = SimTime(70);
  p.device.t_flush = SimTime(292);
  p.device.t_eps = SimTime(22);
  p.device.barrier_mode = BarrierMode::lfs_recovery;
  p.device.barrier_overhead_pct = 0;
  p.host = {SimTime(39), SimTime(160), SimTime(10)};
  return p;
}

// SATA SSD without power-loss protection; barrier emulated with a 5% penalty.
inline Profile plain_ssd() {
  Profile p{"plain-ssd", {}, {}};
  p.device.queue_depth = 32;
  p.device.t_transfer = SimTime(20);
  p.device.t_flush = SimTime(2945);
  p.device.t_eps = SimTime(22);
  p.device.barrier_mode = BarrierMode::in_order_writeback;
  p.device.barrier_overhead_pct = 5;
  p.host = {SimTime(5), SimTime(25), SimTime(10)};
  return p;
}

// SATA SSD with supercapacitor: the whole cache survives power loss.
inline Profile supercap_ssd() {
  Profile p{"supercap-ssd", {}, {}};
  p.device.queue_depth = 32;
  p.device.t_transfer = SimTime(24);
  p.device.t_flush = SimTime(22);
  p.device.t_eps = SimTime(22);
  p.device.supercap = true;
  p.device.barrier_mode = BarrierMode::in_order_writeback;
  p.device.barrier_overhead_pct = 0;
  p.host = {SimTime(5), SimTime(28), SimTime(10)};
  return p;
}

inline Profile by_name(std::string_view name) {
  if (name == "ufs") return ufs();
  if (name == "plain-ssd") return plain_ssd();
  if (name == "supercap-ssd") return supercap_ssd();
  throw std::invalid_argument("unknown profile '" + std::string(name) + "'");
}

}  // namespace profiles

}  // namespace bsim
