#pragma once

#include <cstdint>
#include <list>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "servesim/engine.hpp"

namespace servesim {

/// Residency tracker for decoded inputs waiting on one GPU's inference
/// queue. When an admission would exceed capacity, the least recently
/// enqueued *waiting* inputs are evicted (they keep a host shadow copy and
/// must be reloaded over the link before their batch can run). Inputs
/// pinned by a dispatched batch are never evicted.
class GpuMemory {
 public:
  explicit GpuMemory(std::uint64_t capacity_bytes)
      : capacity_(capacity_bytes) {}

  struct AdmitResult {
    std::vector<std::uint64_t> evicted;  // ids newly marked evicted
  };

  AdmitResult admit(std::uint64_t id, std::uint64_t bytes, SimTime enqueued_at) {
    if (bytes > capacity_) {
      throw std::runtime_error("gpu memory: item larger than capacity");
    }
    AdmitResult res;
    while (used_ + bytes > capacity_) {
      const std::uint64_t victim = oldest_evictable();
      if (victim == 0) {
        throw std::runtime_error("gpu memory: nothing evictable; capacity too small");
      }
      evict(victim);
      res.evicted.push_back(victim);
    }
    auto it = lru_.emplace(lru_.end(), Entry{id, bytes, enqueued_at, false});
    index_[id] = it;
    used_ += bytes;
    return res;
  }

  bool is_evicted(std::uint64_t id) const { return evicted_.count(id) > 0; }

  /// Pin a dispatched batch member so later admissions cannot evict it.
  void pin(std::uint64_t id) {
    auto it = index_.find(id);
    if (it != index_.end()) it->second->pinned = true;
  }

  /// Re-admit an evicted input after its host->device reload finished.
  /// May in turn evict older waiting inputs (the victims it displaces).
  AdmitResult reload(std::uint64_t id, std::uint64_t bytes, SimTime now) {
    if (!evicted_.erase(id)) {
      throw std::runtime_error("gpu memory: reload of resident input");
    }
    AdmitResult res = admit(id, bytes, now);
    pin(id);
    return res;
  }

  /// Input left GPU memory because its batch completed.
  void release(std::uint64_t id) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    used_ -= it->second->bytes;
    lru_.erase(it->second);
    index_.erase(it);
  }

  std::uint64_t used_bytes() const { return used_; }
  std::uint64_t capacity_bytes() const { return capacity_; }

 private:
  struct Entry {
    std::uint64_t id;
    std::uint64_t bytes;
    SimTime enqueued_at;
    bool pinned;
  };

  std::uint64_t oldest_evictable() const {
    for (const Entry& e : lru_) {
      if (!e.pinned) return e.id;
    }
    return 0;
  }

  void evict(std::uint64_t id) {
    auto it = index_.find(id);
    used_ -= it->second->bytes;
    lru_.erase(it->second);
    index_.erase(it);
    evicted_.insert(id);
  }

  std::uint64_t capacity_;
  std::uint64_t used_ = 0;
  std::list<Entry> lru_;  // enqueue order: front is oldest
  std::unordered_map<std::uint64_t, std::list<Entry>::iterator> index_;
  std::unordered_set<std::uint64_t> evicted_;
};

}  // namespace servesim
