#pragma once

#include <algorithm>
#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bsim/sim/task.hpp"
#include "bsim/sim/time.hpp"

namespace bsim {

using ActorId = std::uint32_t;
using EventId = std::uint64_t;
inline constexpr ActorId kNoActor = std::numeric_limits<ActorId>::max();

// A bug in the simulated system or in the simulation itself (double block,
// retry exhaustion, ...). Propagates out of Engine::run*.
struct SimulationFault : std::logic_error {
  using std::logic_error::logic_error;
};

struct CausalityError : SimulationFault {
  using SimulationFault::SimulationFault;
};

enum class ActorState { runnable, blocked, terminated };

struct Actor {
  ActorId id = kNoActor;
  std::string name;
  ActorState state = ActorState::runnable;
  std::string block_reason;
  SimTime blocked_since;
  std::uint64_t wakeups = 0;
  std::uint64_t voluntary_switches = 0;
  std::function<void()> resume;
};

struct TraceRecord {
  SimTime t;
  std::uint64_t seq = 0;
  ActorId actor = kNoActor;
  const char* action = "";
};

// Single-threaded discrete-event kernel. Events are totally ordered by
// (fire_at, insertion seq). Not shareable across OS threads.
class Engine {
 public:
  explicit Engine(SimTime context_switch = SimTime{}) : context_switch_(context_switch) {}
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;
  ~Engine() {
    // Frames of actors still blocked at shutdown are reclaimed here.
    for (auto h : roots_) h.destroy();
  }

  SimTime now() const { return now_; }
  SimTime context_switch() const { return context_switch_; }
  void set_context_switch(SimTime t) { context_switch_ = t; }

  EventId schedule(SimTime at, std::function<void()> fn, const char* action = "event",
                   ActorId target = kNoActor) {
    if (at < now_) {
      throw CausalityError("event scheduled at " + std::to_string(at.us()) + "us before now " +
                           std::to_string(now_.us()) + "us");
    }
    const EventId id = next_seq_++;
    heap_.push_back(Event{at, id, target, action, std::move(fn)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
    return id;
  }

  EventId schedule_in(SimTime delay, std::function<void()> fn, const char* action = "event",
                      ActorId target = kNoActor) {
    return schedule(now_ + delay, std::move(fn), action, target);
  }

  // Processes every event with fire_at <= limit, then advances now() to limit.
  std::size_t run_until(SimTime limit) {
    std::size_t n = 0;
    while (!heap_.empty() && heap_.front().at <= limit) {
      step();
      ++n;
    }
    if (now_ < limit && limit != SimTime::max()) now_ = limit;
    return n;
  }

  // Drains the queue; now() stays at the last processed event.
  std::size_t run() {
    std::size_t n = 0;
    while (!heap_.empty()) {
      step();
      ++n;
    }
    return n;
  }

  bool idle() const { return heap_.empty(); }
  std::size_t pending() const { return heap_.size(); }
  std::uint64_t processed() const { return processed_; }

  // ---- actors -------------------------------------------------------------

  ActorId add_actor(std::string name) {
    Actor a;
    a.id = static_cast<ActorId>(actors_.size());
    a.name = std::move(name);
    actors_.push_back(std::move(a));
    return actors_.back().id;
  }

  const Actor& actor(ActorId id) const { return actors_.at(id); }
  const std::vector<Actor>& actors() const { return actors_; }

  // Starts a coroutine body for actor `id` at now().
  void start(ActorId id, Task<void> body) {
    auto root = drive(*this, id, std::move(body));
    roots_.push_back(root.handle);
    schedule(now_, [h = root.handle] { h.resume(); }, "start", id);
  }

  void block(ActorId id, std::string reason, std::function<void()> resume) {
    Actor& a = actors_.at(id);
    if (a.state != ActorState::runnable) {
      throw SimulationFault("block of non-runnable actor " + a.name + " (" + reason + ")");
    }
    a.state = ActorState::blocked;
    a.block_reason = std::move(reason);
    a.blocked_since = now_;
    a.resume = std::move(resume);
  }

  // The woken actor resumes after one context switch.
  void wake(ActorId id) {
    Actor& a = actors_.at(id);
    if (a.state != ActorState::blocked) {
      throw SimulationFault("wake of non-blocked actor " + a.name);
    }
    a.state = ActorState::runnable;
    a.block_reason.clear();
    ++a.wakeups;
    ++a.voluntary_switches;
    schedule(now_ + context_switch_, std::exchange(a.resume, {}), "resume", id);
  }

  bool is_blocked(ActorId id) const { return actors_.at(id).state == ActorState::blocked; }

  // Blocked actors at the end of a run, formatted for diagnostics.
  std::vector<std::string> deadlock_report() const {
    std::vector<std::string> out;
    for (const auto& a : actors_) {
      if (a.state == ActorState::blocked) {
        out.push_back(a.name + " blocked since " + std::to_string(a.blocked_since.us()) + "us on " +
                      a.block_reason);
      }
    }
    return out;
  }

  // ---- awaitables ---------------------------------------------------------

  struct DelayAwaiter {
    Engine& eng;
    ActorId who;
    SimTime d;
    const char* action;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) {
      eng.schedule(eng.now() + d, [h] { h.resume(); }, action, who);
    }
    void await_resume() const noexcept {}
  };

  // Busy time: the actor stays runnable.
  DelayAwaiter delay(ActorId who, SimTime d, const char* action = "cpu") { return {*this, who, d, action}; }

  struct BlockAwaiter {
    Engine& eng;
    ActorId who;
    std::string reason;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) {
      eng.block(who, std::move(reason), [h] { h.resume(); });
    }
    void await_resume() const noexcept {}
  };

  // Voluntary sleep until somebody calls wake(who).
  BlockAwaiter suspend(ActorId who, std::string reason) { return {*this, who, std::move(reason)}; }

  // ---- tracing ------------------------------------------------------------

  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }

  // FNV-1a over (t, seq, actor, action) of every processed event. Always on.
  std::uint64_t trace_hash() const { return hash_; }

  void write_trace_jsonl(std::ostream& os) const {
    for (const auto& r : trace_) {
      os << "{\"type\":\"event\",\"t\":" << r.t.us() << ",\"seq\":" << r.seq << ",\"actor\":\""
         << (r.actor == kNoActor ? std::string("-") : actors_.at(r.actor).name) << "\",\"action\":\""
         << r.action << "\"}\n";
    }
  }

  // Called after every processed event (crash-state snapshotting).
  void set_post_event_hook(std::function<void()> hook) { hook_ = std::move(hook); }

 private:
  struct Event {
    SimTime at;
    std::uint64_t seq;
    ActorId target;
    const char* action;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  struct Root {
    struct promise_type {
      Root get_return_object() { return Root{std::coroutine_handle<promise_type>::from_promise(*this)}; }
      std::suspend_always initial_suspend() noexcept { return {}; }
      std::suspend_always final_suspend() noexcept { return {}; }
      void return_void() noexcept {}
      void unhandled_exception() noexcept { std::terminate(); }
    };
    std::coroutine_handle<promise_type> handle;
  };

  static Root drive(Engine& eng, ActorId id, Task<void> body) {
    try {
      co_await body;
    } catch (...) {
      if (!eng.fault_) eng.fault_ = std::current_exception();
    }
    eng.actors_.at(id).state = ActorState::terminated;
  }

  void mix(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (i * 8)) & 0xffu;
      hash_ *= 1099511628211ull;
    }
  }

  void step() {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Event ev = std::move(heap_.back());
    heap_.pop_back();
    now_ = ev.at;
    ++processed_;
    mix(ev.at.us());
    mix(ev.seq);
    mix(ev.target);
    for (const char* p = ev.action; *p; ++p) mix(static_cast<unsigned char>(*p));
    if (tracing_) trace_.push_back(TraceRecord{ev.at, ev.seq, ev.target, ev.action});
    if (ev.fn) ev.fn();
    if (fault_) std::rethrow_exception(std::exchange(fault_, nullptr));
    if (hook_) hook_();
  }

  SimTime now_{};
  SimTime context_switch_{};
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::vector<Event> heap_;
  std::vector<Actor> actors_;
  std::vector<std::coroutine_handle<>> roots_;
  std::exception_ptr fault_;
  bool tracing_ = false;
  std::vector<TraceRecord> trace_;
  std::uint64_t hash_ = 1469598103934665603ull;
  std::function<void()> hook_;
};

}  // namespace bsim
