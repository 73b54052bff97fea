#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "bsim/block/dispatcher.hpp"
#include "bsim/device/crash.hpp"

namespace bsim {

// The four orders of one run, restricted to what the checker needs.
struct OrderTrace {
  struct Req {
    RequestId id = kNoRequest;
    std::vector<BlockWrite> blocks;
    bool ordered = false;
    std::optional<EpochId> epoch;
  };

  std::vector<Req> requests;                 // issue order I
  std::vector<DispatchRecord> dispatch;      // dispatch order D
  std::vector<CompletionRecord> completion;  // transfer order C
  std::vector<std::vector<BlockWrite>> epochs;
  std::set<BlockWrite> orderless;
  std::map<BlockWrite, EpochId> epoch_of;
  // Epochs closed by a barrier at capture time.
  std::size_t closed_epochs = 0;
  // Command id -> blocks and ordered flag, for transfer-order epochs.
  std::unordered_map<CommandId, std::size_t> dispatch_index;

  std::unordered_map<RequestId, std::size_t> request_index;

  const Req* request(RequestId id) const {
    auto it = request_index.find(id);
    return it == request_index.end() ? nullptr : &requests[it->second];
  }
};

inline OrderTrace capture(const BlockLayer& blk) {
  OrderTrace t;
  std::unordered_map<RequestId, EpochId> epoch_by_req;
  const auto& eps = blk.scheduler().epochs();
  for (const auto& e : eps) {
    for (RequestId id : e.members) epoch_by_req[id] = e.id;
  }
  t.closed_epochs = blk.scheduler().closed_epochs();
  t.epochs.resize(eps.size());
  for (const auto& is : blk.issues()) {
    OrderTrace::Req r{is.id, is.blocks, is.attrs.has(Attr::ordered), std::nullopt};
    auto it = epoch_by_req.find(is.id);
    if (r.ordered && it != epoch_by_req.end()) {
      r.epoch = it->second;
      for (const auto& w : r.blocks) {
        t.epochs[it->second].push_back(w);
        t.epoch_of[w] = it->second;
      }
    } else {
      // Deferred requests that never entered the scheduler carry no epoch;
      // they were never transferred either.
      if (!r.ordered) t.orderless.insert(r.blocks.begin(), r.blocks.end());
    }
    t.request_index[r.id] = t.requests.size();
    t.requests.push_back(std::move(r));
  }
  t.dispatch = blk.dispatches();
  for (std::size_t i = 0; i < t.dispatch.size(); ++i) t.dispatch_index[t.dispatch[i].cmd] = i;
  t.completion = blk.device().completions();
  return t;
}

// Epoch-prefix closure: for every ORDERED member of epoch k in the
// candidate, epochs before k are fully contained. Orderless blocks are
// unconstrained.
inline bool oracle_legal(const OrderTrace& t, const std::vector<BlockWrite>& candidate) {
  std::optional<EpochId> top;
  for (const auto& w : candidate) {
    auto it = t.epoch_of.find(w);
    if (it != t.epoch_of.end() && (!top || it->second > *top)) top = it->second;
  }
  if (!top) return true;
  std::set<BlockWrite> have(candidate.begin(), candidate.end());
  for (EpochId e = 0; e < *top; ++e) {
    for (const auto& w : t.epochs[e]) {
      if (!have.count(w)) return false;
    }
  }
  return true;
}

// Independent formulation: walk epochs in order; once an epoch is found
// incomplete, no later epoch may contribute a block.
inline bool oracle_legal_scan(const std::vector<std::vector<BlockWrite>>& epochs, const std::vector<BlockWrite>& candidate) {
  std::vector<BlockWrite> sorted = candidate;
  std::sort(sorted.begin(), sorted.end());
  auto in = [&](const BlockWrite& w) { return std::binary_search(sorted.begin(), sorted.end(), w); };
  bool gap = false;
  for (const auto& members : epochs) {
    std::size_t present = 0;
    for (const auto& w : members) present += in(w) ? 1 : 0;
    if (gap && present > 0) return false;
    if (present < members.size()) gap = true;
  }
  return true;
}

// Closed-form description of every oracle-legal durable set: full epoch
// prefix, any subset of the first incomplete epoch, any orderless subset.
class LegalitySet {
 public:
  LegalitySet(std::vector<std::vector<BlockWrite>> epochs, std::vector<BlockWrite> orderless)
      : orderless_(std::move(orderless)) {
    for (auto& e : epochs) {
      if (!e.empty()) epochs_.push_back(std::move(e));
    }
  }
  explicit LegalitySet(const OrderTrace& t)
      : LegalitySet(t.epochs, std::vector<BlockWrite>(t.orderless.begin(), t.orderless.end())) {}

  bool contains(const std::vector<BlockWrite>& candidate) const { return oracle_legal_scan(epochs_, candidate); }

  // Number of legal subsets of the traced blocks.
  std::uint64_t count() const {
    std::uint64_t ordered = 1;  // every epoch full
    for (const auto& e : epochs_) ordered += (std::uint64_t{1} << e.size()) - 1;
    return ordered << orderless_.size();
  }

  // Every legal subset, for small traces.
  std::vector<std::vector<BlockWrite>> enumerate() const {
    std::vector<std::vector<BlockWrite>> ordered_parts;
    std::vector<BlockWrite> prefix;
    for (const auto& e : epochs_) {
      for (std::uint64_t m = 0; m + 1 < (std::uint64_t{1} << e.size()); ++m) {
        auto s = prefix;
        for (std::size_t i = 0; i < e.size(); ++i) {
          if (m >> i & 1u) s.push_back(e[i]);
        }
        ordered_parts.push_back(std::move(s));
      }
      prefix.insert(prefix.end(), e.begin(), e.end());
    }
    ordered_parts.push_back(prefix);
    std::vector<std::vector<BlockWrite>> out;
    for (const auto& part : ordered_parts) {
      for (std::uint64_t m = 0; m < (std::uint64_t{1} << orderless_.size()); ++m) {
        auto s = part;
        for (std::size_t i = 0; i < orderless_.size(); ++i) {
          if (m >> i & 1u) s.push_back(orderless_[i]);
        }
        std::sort(s.begin(), s.end());
        out.push_back(std::move(s));
      }
    }
    return out;
  }

  const std::vector<std::vector<BlockWrite>>& epochs() const { return epochs_; }
  const std::vector<BlockWrite>& orderless() const { return orderless_; }

 private:
  std::vector<std::vector<BlockWrite>> epochs_;
  std::vector<BlockWrite> orderless_;
};

// ---- order conjuncts, compared per epoch ----------------------------------

// I = D: ORDERED requests leave the scheduler in epoch order and every
// closed epoch's final ORDERED dispatch, and only that one, carries the barrier.
inline bool issue_equals_dispatch(const OrderTrace& t) {
  std::map<EpochId, std::vector<bool>> flags;
  std::optional<EpochId> cur;
  for (const auto& d : t.dispatch) {
    if (d.kind != CommandKind::write) continue;
    std::optional<EpochId> e;
    for (RequestId id : d.constituents) {
      const auto* r = t.request(id);
      if (r && r->epoch) e = r->epoch;
    }
    if (!e) continue;
    if (cur && *e < *cur) return false;
    cur = e;
    flags[*e].push_back(d.attrs.has(Attr::barrier));
  }
  for (const auto& [e, f] : flags) {
    const bool closed = e < t.closed_epochs;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const bool want = closed && i + 1 == f.size();
      if (f[i] != want) return false;
    }
  }
  return true;
}

namespace detail {

inline std::optional<EpochId> command_epoch(const OrderTrace& t, CommandId cmd) {
  auto it = t.dispatch_index.find(cmd);
  if (it == t.dispatch_index.end()) return std::nullopt;
  std::optional<EpochId> e;
  for (RequestId id : t.dispatch[it->second].constituents) {
    const auto* r = t.request(id);
    if (r && r->epoch) e = r->epoch;
  }
  return e;
}

}  // namespace detail

// D = C: ORDERED commands finish transfer in epoch order.
inline bool dispatch_equals_transfer(const OrderTrace& t) {
  std::optional<EpochId> cur;
  for (const auto& c : t.completion) {
    if (c.kind != CommandKind::write) continue;
    auto e = detail::command_epoch(t, c.cmd);
    if (!e) continue;
    if (cur && *e < *cur) return false;
    cur = e;
  }
  return true;
}

// Epochs as the device sees them: delimited by barrier commands in transfer order.
inline std::vector<std::vector<BlockWrite>> transfer_epochs(const OrderTrace& t) {
  std::vector<std::vector<BlockWrite>> out(1);
  for (const auto& c : t.completion) {
    if (c.kind != CommandKind::write) continue;
    auto it = t.dispatch_index.find(c.cmd);
    if (it == t.dispatch_index.end()) continue;
    const auto& d = t.dispatch[it->second];
    if (!d.attrs.has(Attr::ordered)) continue;
    for (RequestId id : d.constituents) {
      const auto* r = t.request(id);
      if (r && r->ordered) out.back().insert(out.back().end(), r->blocks.begin(), r->blocks.end());
    }
    if (c.barrier) out.emplace_back();
  }
  return out;
}

// C = P for one crash state: durable ORDERED blocks are prefix-closed over
// transfer-order epochs.
inline bool transfer_equals_persist(const std::vector<std::vector<BlockWrite>>& cepochs, const std::vector<BlockWrite>& durable) {
  return oracle_legal_scan(cepochs, durable);
}

}  // namespace bsim
