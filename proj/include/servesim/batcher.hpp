#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <vector>

#include "servesim/engine.hpp"
#include "servesim/types.hpp"

namespace servesim {

struct PendingItem {
  std::uint64_t id = 0;
  SimTime enqueued_at = 0;
};

struct BatchDecision {
  enum class Kind { DispatchNow, WaitUntil, Idle } kind = Kind::Idle;
  std::uint32_t batch_size = 0;  // DispatchNow: oldest batch_size items
  SimTime wait_until = 0;        // WaitUntil
};

/// Pure dispatch rule over a queue ordered by enqueue time: dispatch the
/// oldest min(|q|, max_batch) when the queue is full or the oldest item
/// has waited max_delay_us; otherwise wait for that deadline.
inline BatchDecision batcher_decide(std::span<const PendingItem> queue,
                                    const BatcherConfig& cfg, SimTime now) {
  if (cfg.max_batch == 0) throw std::invalid_argument("max_batch must be >= 1");
  if (queue.empty()) return {BatchDecision::Kind::Idle, 0, 0};
  const std::uint32_t take =
      static_cast<std::uint32_t>(std::min<std::size_t>(queue.size(), cfg.max_batch));
  if (queue.size() >= cfg.max_batch) {
    return {BatchDecision::Kind::DispatchNow, cfg.max_batch, 0};
  }
  if (cfg.full_only) {
    return {BatchDecision::Kind::Idle, 0, 0};  // hold out for a full batch
  }
  const SimTime deadline = queue.front().enqueued_at + cfg.max_delay_us;
  if (now >= deadline) {
    return {BatchDecision::Kind::DispatchNow, take, 0};
  }
  return {BatchDecision::Kind::WaitUntil, 0, deadline};
}

/// Event-driven wrapper: owns the pending queue and its timeout timer,
/// hands batches to a sink callback as the rule fires.
class BatchQueue {
 public:
  using Sink = std::function<void(std::vector<PendingItem>&&)>;

  BatchQueue(Engine& eng, BatcherConfig cfg, Sink sink)
      : eng_(eng), cfg_(cfg), sink_(std::move(sink)) {}

  void add(std::uint64_t id) {
    queue_.push_back(PendingItem{id, eng_.now()});
    pump();
  }

  std::size_t size() const { return queue_.size(); }

 private:
  void pump() {
    for (;;) {
      const BatchDecision d = batcher_decide(
          std::span<const PendingItem>(queue_.data(), queue_.size()), cfg_,
          eng_.now());
      switch (d.kind) {
        case BatchDecision::Kind::DispatchNow: {
          std::vector<PendingItem> batch(queue_.begin(),
                                         queue_.begin() + d.batch_size);
          queue_.erase(queue_.begin(), queue_.begin() + d.batch_size);
          sink_(std::move(batch));
          continue;  // re-evaluate the remainder
        }
        case BatchDecision::Kind::WaitUntil:
          arm_timer(d.wait_until);
          return;
        case BatchDecision::Kind::Idle:
          disarm_timer();
          return;
      }
    }
  }

  void arm_timer(SimTime at) {
    if (timer_.valid() && timer_armed_for_ == at) return;
    disarm_timer();
    timer_ = eng_.schedule(at, [this] {
      timer_ = EventHandle{};
      pump();
    });
    timer_armed_for_ = at;
  }

  void disarm_timer() {
    if (timer_.valid()) {
      eng_.cancel(timer_);
      timer_ = EventHandle{};
    }
  }

  Engine& eng_;
  BatcherConfig cfg_;
  Sink sink_;
  std::vector<PendingItem> queue_;
  EventHandle timer_{};
  SimTime timer_armed_for_ = 0;
};

}  // namespace servesim
