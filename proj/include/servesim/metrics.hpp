#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "servesim/engine.hpp"
#include "servesim/types.hpp"

namespace servesim {

/// Contiguous per-request segments; phases absent from a path stay zero.
/// The segments tile [issued, completed], so they sum to the end-to-end
/// latency exactly.
struct PhaseBreakdown {
  std::uint64_t prep_queue = 0;
  std::uint64_t prep = 0;
  std::uint64_t transfer_in = 0;
  std::uint64_t batch_queue = 0;
  std::uint64_t reload = 0;
  std::uint64_t inference = 0;
  std::uint64_t transfer_out = 0;
  std::uint64_t broker_publish = 0;
  std::uint64_t broker_wait = 0;
  std::uint64_t broker_consume = 0;

  std::uint64_t sum() const {
    return prep_queue + prep + transfer_in + batch_queue + reload + inference +
           transfer_out + broker_publish + broker_wait + broker_consume;
  }
};

struct TraceRecord {
  std::uint64_t id = 0;
  std::string image_class;
  SimTime issued_at = 0;
  SimTime completed_at = 0;
  PhaseBreakdown phases;

  std::uint64_t latency() const { return completed_at - issued_at; }
};

/// Nearest-rank percentile: the ceil(p*n)-th smallest sample.
inline std::uint64_t percentile(std::vector<std::uint64_t> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("percentile: no samples");
  if (p <= 0 || p > 1) throw std::invalid_argument("percentile: p out of range");
  std::sort(samples.begin(), samples.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(samples.size())));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

/// Cumulative busy-time ledger for one device pool. Busy time is tracked
/// as aggregate server-microseconds so it can be sampled mid-run and
/// clipped to the measurement window.
class BusyLedger {
 public:
  explicit BusyLedger(std::uint32_t multiplicity = 1)
      : multiplicity_(multiplicity ? multiplicity : 1) {}

  void start(std::uint64_t slot_key, SimTime now) { running_[slot_key] = now; }

  void stop(std::uint64_t slot_key, SimTime now) {
    auto it = running_.find(slot_key);
    if (it == running_.end()) return;
    total_ += now - it->second;
    running_.erase(it);
  }

  std::uint64_t busy_at(SimTime now) const {
    std::uint64_t b = total_;
    for (const auto& [_, start] : running_) b += now - start;
    return b;
  }

  std::uint32_t multiplicity() const { return multiplicity_; }

 private:
  std::uint32_t multiplicity_;
  std::uint64_t total_ = 0;
  std::map<std::uint64_t, SimTime> running_;
};

/// E_d = [idle * wall + (active - idle) * busy] / completions, with busy
/// normalized to a single-device equivalent (aggregate / multiplicity).
inline double energy_per_image_j(std::uint64_t busy_us, std::uint64_t wall_us,
                                 std::uint64_t completions,
                                 const DevicePower& power) {
  if (completions == 0) throw std::invalid_argument("energy: zero completions");
  if (wall_us == 0) throw std::invalid_argument("energy: empty window");
  const double wall_s = static_cast<double>(wall_us) * 1e-6;
  const double busy_s = static_cast<double>(busy_us) * 1e-6;
  return (power.idle_watts * wall_s +
          (power.active_watts - power.idle_watts) * busy_s) /
         static_cast<double>(completions);
}

struct DeviceUsage {
  std::string name;
  std::uint64_t busy_us = 0;  // normalized to one-device equivalent
  std::uint32_t multiplicity = 1;
  double utilization = 0;
  double energy_per_image_j = 0;
};

struct RunReport {
  double throughput_rps = 0;
  double latency_mean_us = 0;
  std::uint64_t latency_p50_us = 0;
  std::uint64_t latency_p99_us = 0;
  PhaseBreakdown mean_breakdown;  // integer mean (floor) per phase
  double mean_latency_check_us = 0;
  std::vector<DeviceUsage> devices;
  std::uint64_t completions = 0;
  std::uint64_t warm_up_discarded = 0;
  std::uint64_t window_us = 0;
  std::uint64_t max_batcher_wait_us = 0;
  std::uint32_t max_batch_dispatched = 0;
  std::uint64_t evictions = 0;
  std::uint64_t total_reload_us = 0;
  std::uint64_t seed = 0;
  std::string scenario_hash;

  double mean_in_flight() const {
    return throughput_rps * latency_mean_us * 1e-6;
  }

  double phase_share(std::uint64_t phase_mean_us) const {
    return latency_mean_us > 0
               ? static_cast<double>(phase_mean_us) / latency_mean_us
               : 0;
  }

  double share_prep() const { return phase_share(mean_breakdown.prep); }
  double share_queue() const {
    return phase_share(mean_breakdown.prep_queue + mean_breakdown.batch_queue);
  }
  double share_transfer() const {
    return phase_share(mean_breakdown.transfer_in + mean_breakdown.transfer_out);
  }
  double share_inference() const { return phase_share(mean_breakdown.inference); }
  double share_broker() const {
    return phase_share(mean_breakdown.broker_publish + mean_breakdown.broker_wait +
                       mean_breakdown.broker_consume);
  }
  double share_reload() const { return phase_share(mean_breakdown.reload); }

  double energy_cpu_j() const {
    for (const auto& d : devices)
      if (d.name == "cpu") return d.energy_per_image_j;
    return 0;
  }
  double energy_gpu_j() const {  // summed across GPUs
    double e = 0;
    for (const auto& d : devices)
      if (d.name.rfind("gpu", 0) == 0) e += d.energy_per_image_j;
    return e;
  }
};

struct WindowedBusy {
  std::string name;
  std::uint64_t busy_start_us = 0;  // aggregate busy at window start
  std::uint64_t busy_end_us = 0;    // aggregate busy at window end
  std::uint32_t multiplicity = 1;
  DevicePower power;
};

/// Aggregates a post-warm-up trace into a RunReport. The breakdown-sum
/// invariant is re-verified for every request; a violation is an internal
/// consistency bug and fails the run loudly.
inline RunReport finalize_report(const std::vector<TraceRecord>& trace,
                                 const std::vector<WindowedBusy>& devices,
                                 SimTime window_start, SimTime window_end,
                                 std::uint64_t warm_up_discarded) {
  if (trace.empty()) throw std::runtime_error("finalize_report: empty trace");
  RunReport rep;
  rep.warm_up_discarded = warm_up_discarded;
  rep.completions = trace.size();

  std::vector<std::uint64_t> lat;
  lat.reserve(trace.size());
  unsigned __int128 lat_total = 0;
  unsigned __int128 ph[10] = {};
  for (const TraceRecord& r : trace) {
    if (r.phases.sum() != r.latency()) {
      throw std::runtime_error("finalize_report: breakdown does not sum to latency");
    }
    lat.push_back(r.latency());
    lat_total += r.latency();
    ph[0] += r.phases.prep_queue;
    ph[1] += r.phases.prep;
    ph[2] += r.phases.transfer_in;
    ph[3] += r.phases.batch_queue;
    ph[4] += r.phases.reload;
    ph[5] += r.phases.inference;
    ph[6] += r.phases.transfer_out;
    ph[7] += r.phases.broker_publish;
    ph[8] += r.phases.broker_wait;
    ph[9] += r.phases.broker_consume;
  }
  const double n = static_cast<double>(trace.size());
  rep.latency_mean_us = static_cast<double>(lat_total) / n;
  rep.latency_p50_us = percentile(lat, 0.5);
  rep.latency_p99_us = percentile(lat, 0.99);
  auto mean_of = [&](int i) {
    return static_cast<std::uint64_t>(static_cast<double>(ph[i]) / n);
  };
  rep.mean_breakdown.prep_queue = mean_of(0);
  rep.mean_breakdown.prep = mean_of(1);
  rep.mean_breakdown.transfer_in = mean_of(2);
  rep.mean_breakdown.batch_queue = mean_of(3);
  rep.mean_breakdown.reload = mean_of(4);
  rep.mean_breakdown.inference = mean_of(5);
  rep.mean_breakdown.transfer_out = mean_of(6);
  rep.mean_breakdown.broker_publish = mean_of(7);
  rep.mean_breakdown.broker_wait = mean_of(8);
  rep.mean_breakdown.broker_consume = mean_of(9);

  if (window_end <= window_start) {
    throw std::runtime_error("finalize_report: empty measurement window");
  }
  rep.window_us = window_end - window_start;
  rep.throughput_rps = n / (static_cast<double>(rep.window_us) * 1e-6);

  for (const WindowedBusy& d : devices) {
    DeviceUsage u;
    u.name = d.name;
    u.multiplicity = d.multiplicity;
    const std::uint64_t aggregate = d.busy_end_us - d.busy_start_us;
    u.busy_us = aggregate / std::max<std::uint32_t>(d.multiplicity, 1);
    u.utilization = static_cast<double>(u.busy_us) /
                    static_cast<double>(rep.window_us);
    if (u.utilization > 1.0 + 1e-9) {
      throw std::runtime_error("finalize_report: utilization above 1 for " + d.name);
    }
    u.energy_per_image_j =
        energy_per_image_j(u.busy_us, rep.window_us, rep.completions, d.power);
    rep.devices.push_back(u);
  }
  return rep;
}

}  // namespace servesim
