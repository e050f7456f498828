#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace servesim {

/// Virtual time in integer microseconds since simulation start.
using SimTime = std::uint64_t;

struct EventHandle {
  std::uint64_t seq = 0;
  bool valid() const { return seq != 0; }
};

struct EngineStats {
  std::uint64_t events_processed = 0;
  SimTime final_clock = 0;
  enum class StopReason { QueueExhausted, ClockLimit, Requested } reason =
      StopReason::QueueExhausted;
};

/// Deterministic single-threaded discrete-event loop. Events fire in
/// strict (fire_at, insertion seq) order; ties dispatch FIFO.
class Engine {
 public:
  using Callback = std::function<void()>;

  SimTime now() const { return clock_; }

  EventHandle schedule(SimTime fire_at, Callback fn, int kind = 0,
                       std::uint64_t target = 0) {
    if (fire_at < clock_) {
      throw std::logic_error("schedule: fire_at is in the past");
    }
    const std::uint64_t seq = ++next_seq_;
    queue_.push(Entry{fire_at, seq, kind, target, std::move(fn)});
    pending_.insert(seq);
    return EventHandle{seq};
  }

  /// True if the event had not yet fired and is now removed. Idempotent.
  bool cancel(EventHandle h) {
    auto it = pending_.find(h.seq);
    if (it == pending_.end()) return false;
    pending_.erase(it);
    cancelled_.insert(h.seq);
    return true;
  }

  /// Handlers may call this to end the run after the current event.
  void request_stop() { stop_requested_ = true; }

  /// Dispatch events until the queue drains, the clock would pass
  /// `clock_limit`, or a handler requests a stop.
  EngineStats run(SimTime clock_limit = UINT64_MAX) {
    EngineStats stats;
    stop_requested_ = false;
    while (!queue_.empty()) {
      if (stop_requested_) {
        stats.reason = EngineStats::StopReason::Requested;
        break;
      }
      const Entry& top = queue_.top();
      if (cancelled_.erase(top.seq)) {
        queue_.pop();
        continue;
      }
      if (top.fire_at > clock_limit) {
        stats.reason = EngineStats::StopReason::ClockLimit;
        break;
      }
      Entry e = top;
      queue_.pop();
      pending_.erase(e.seq);
      clock_ = e.fire_at;
      e.fn();
      ++stats.events_processed;
    }
    if (queue_.empty() && stats.reason == EngineStats::StopReason::QueueExhausted) {
      // clock stays at the last dispatched event
    }
    stats.final_clock = clock_;
    return stats;
  }

  bool empty() const { return queue_.size() == cancelled_.size(); }

 private:
  struct Entry {
    SimTime fire_at;
    std::uint64_t seq;
    int kind;
    std::uint64_t target;
    Callback fn;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_set<std::uint64_t> pending_;
  std::unordered_set<std::uint64_t> cancelled_;
  SimTime clock_ = 0;
  std::uint64_t next_seq_ = 0;
  bool stop_requested_ = false;
};

}  // namespace servesim
