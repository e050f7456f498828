#pragma once

#include <stdexcept>
#include <string>

#include "servesim/types.hpp"

namespace servesim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Semantic validation, independent of the JSON layer. Throws ConfigError
/// naming the offending field.
inline void validate_scenario(const ScenarioConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (cfg.schema != 1) fail("schema", "unsupported schema version");
  if (cfg.batcher.max_batch < 1) fail("batcher.max_batch", "must be >= 1");
  if (cfg.workload.concurrency < 1) fail("workload.concurrency", "must be >= 1");
  if (cfg.workload.total_requests == 0) {
    fail("workload.total_requests", "must be >= 1");
  }
  if (cfg.workload.warm_up_count() >= cfg.workload.total_requests) {
    fail("workload.warm_up", "warm-up count must be below total_requests");
  }
  if (cfg.workload.mix.empty()) fail("workload.image", "no image class configured");
  double mass = 0;
  for (const auto& [name, w] : cfg.workload.mix) {
    if (w < 0) fail("workload.image.mix." + name, "negative weight");
    mass += w;
    if (!cfg.images.count(name)) {
      fail("workload.image.mix." + name, "unknown image class");
    }
  }
  if (mass <= 0) fail("workload.image.mix", "weights sum to zero");
  for (const auto& [name, img] : cfg.images) {
    if (img.compressed_bytes == 0) fail("images." + name, "compressed_bytes must be > 0");
    if (img.width == 0 || img.height == 0) fail("images." + name, "zero dimensions");
  }
  const ServerResources& r = cfg.resources;
  if (cfg.placement == PrepPlacement::CpuPool && r.cpu_prep_processes < 1) {
    fail("resources.cpu_prep_processes", "must be >= 1");
  }
  if (cfg.placement == PrepPlacement::GpuStreams && r.gpu_prep_streams < 1) {
    fail("resources.gpu_prep_streams", "must be >= 1");
  }
  if (r.inference_instances_per_gpu < 1) {
    fail("resources.inference_instances_per_gpu", "must be >= 1");
  }
  if (r.num_gpus < 1) fail("resources.num_gpus", "must be >= 1");
  if (r.link.bandwidth_bytes_per_us <= 0) {
    fail("resources.link_bandwidth_bytes_per_us", "must be > 0");
  }
  if (cfg.model.beta_us <= 0) fail("model.beta_us", "must be > 0");
  if (cfg.model.alpha_us < 0) fail("model.alpha_us", "must be >= 0");
  if (cfg.model.input_width == 0 || cfg.model.input_height == 0) {
    fail("model.input_width", "zero model input dimensions");
  }
  if (cfg.jitter.service_frac < 0 || cfg.jitter.service_frac >= 1) {
    fail("jitter.service_frac", "must be in [0, 1)");
  }
  if (cfg.energy.cpu.active_watts < cfg.energy.cpu.idle_watts ||
      cfg.energy.cpu.idle_watts < 0) {
    fail("energy.cpu", "requires active_watts >= idle_watts >= 0");
  }
  if (cfg.energy.gpu.active_watts < cfg.energy.gpu.idle_watts ||
      cfg.energy.gpu.idle_watts < 0) {
    fail("energy.gpu", "requires active_watts >= idle_watts >= 0");
  }
  if (cfg.gpu_memory.enabled) {
    if (cfg.placement != PrepPlacement::GpuStreams) {
      fail("gpu_memory.enabled", "residency model requires GPU preprocessing");
    }
    // every slot can hold a pinned full batch at once
    const std::uint64_t need = cfg.model.bytes_per_input() *
                               cfg.batcher.max_batch *
                               cfg.resources.inference_instances_per_gpu;
    if (cfg.gpu_memory.capacity_bytes < need) {
      fail("gpu_memory.capacity_bytes",
           "must hold one full batch of decoded inputs per instance slot");
    }
  }
  if (cfg.two_stage) {
    const TwoStageSpec& ts = *cfg.two_stage;
    if (ts.stage1.servers < 1 || ts.stage2.servers < 1) {
      fail("two_stage.servers", "must be >= 1");
    }
    if (ts.stage2.beta_us <= 0) fail("two_stage.stage2.beta_us", "must be > 0");
    if (ts.stage2_batcher.max_batch < 1) {
      fail("two_stage.stage2.batcher.max_batch", "must be >= 1");
    }
    if (ts.broker.publish_us < 0 || ts.broker.consume_us < 0 ||
        ts.broker.per_byte_ns < 0) {
      fail("two_stage.interconnect.profile", "negative broker coefficients");
    }
    if (!ts.fanout.is_fixed()) {
      double p = 0;
      for (const auto& [k, w] : ts.fanout.distribution) {
        if (w < 0) fail("two_stage.fanout.distribution", "negative probability");
        p += w;
      }
      if (p < 0.999 || p > 1.001) {
        fail("two_stage.fanout.distribution", "probabilities must sum to 1");
      }
    }
  }
}

}  // namespace servesim
