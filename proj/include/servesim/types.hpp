#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace servesim {

struct ImageClass {
  std::string name;
  std::uint64_t compressed_bytes = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  std::uint64_t pixels() const {
    return static_cast<std::uint64_t>(width) * height;
  }
};

/// The three canonical ImageNet-representative classes.
inline ImageClass small_image() { return {"small", 4 * 1024, 60, 70}; }
inline ImageClass medium_image() { return {"medium", 121 * 1024, 500, 375}; }
inline ImageClass large_image() { return {"large", 9528ULL * 1024, 3564, 2880}; }

struct ModelProfile {
  std::string name = "vit";
  std::uint32_t input_width = 224;
  std::uint32_t input_height = 224;
  double alpha_us = 2000;  // fixed batch launch cost
  double beta_us = 8000;   // per-item cost
  std::uint64_t output_bytes = 4096;

  /// Decoded input tensor: W x H x 3 channels x 4 bytes (fp32).
  std::uint64_t bytes_per_input() const {
    return static_cast<std::uint64_t>(input_width) * input_height * 3 * 4;
  }
};

/// Affine preprocessing cost: fixed + per compressed byte + per source pixel.
struct StageProfile {
  double fixed_us = 0;
  double per_byte_ns = 0;
  double per_pixel_ns = 0;
};

struct BatcherConfig {
  std::uint32_t max_batch = 1;
  std::uint64_t max_delay_us = 0;
  bool full_only = false;  // dispatch only full batches (fixed batching)
};

struct LinkModel {
  std::uint64_t latency_us = 10;
  double bandwidth_bytes_per_us = 12000;  // ~PCIe3 x16
};

struct ServerResources {
  std::uint32_t cpu_prep_processes = 1;
  std::uint32_t gpu_prep_streams = 1;
  std::uint32_t inference_instances_per_gpu = 1;
  std::uint32_t num_gpus = 1;
  LinkModel link;  // one link per GPU
};

struct GpuMemoryConfig {
  bool enabled = false;
  std::uint64_t capacity_bytes = 0;
};

enum class PrepPlacement { CpuPool, GpuStreams };
enum class RunMode { EndToEnd, PrepOnly, InferenceOnly };

struct DevicePower {
  double idle_watts = 0;
  double active_watts = 0;
};

struct EnergyModel {
  DevicePower cpu{60, 220};
  DevicePower gpu{60, 180};  // per GPU
};

struct WorkloadConfig {
  // Either a single class name or a categorical mix over class names.
  std::map<std::string, double> mix;  // name -> weight
  std::uint32_t concurrency = 1;
  std::uint64_t total_requests = 2000;
  std::optional<std::uint64_t> warm_up;  // default: max(1000, 5*C)

  std::uint64_t warm_up_count() const {
    if (warm_up) return *warm_up;
    return std::max<std::uint64_t>(1000, 5ULL * concurrency);
  }
};

// ---- multi-DNN (two-stage) types ----

enum class BrokerKind { DiskBacked, MemoryBacked, Fused };

struct BrokerProfile {
  double publish_us = 0;   // per-message publish latency
  double consume_us = 0;   // per-message consume latency
  double per_byte_ns = 0;  // serialization cost per message byte
};

struct FanoutModel {
  // Fixed count, or a categorical distribution over counts.
  std::uint32_t fixed = 1;
  std::map<std::uint32_t, double> distribution;  // count -> probability
  std::uint64_t face_message_bytes = 0;  // 0: stage-2 decoded input size

  bool is_fixed() const { return distribution.empty(); }
};

struct StagePool {
  double alpha_us = 0;  // batch launch cost
  double beta_us = 0;   // per-item cost
  double prep_us = 0;   // per-frame preprocessing ahead of the DNN (stage 1)
  std::uint32_t servers = 1;
};

struct TwoStageSpec {
  StagePool stage1;  // detection, batch size 1 per frame
  StagePool stage2;  // identification
  BatcherConfig stage2_batcher;
  BrokerKind kind = BrokerKind::MemoryBacked;
  BrokerProfile broker;
  FanoutModel fanout;
};

struct JitterConfig {
  double service_frac = 0;  // +/- uniform multiplicative jitter on services
};

struct ScenarioConfig {
  int schema = 1;
  std::uint64_t seed = 1;
  WorkloadConfig workload;
  ServerResources resources;
  PrepPlacement placement = PrepPlacement::CpuPool;
  StageProfile cpu_prep;
  StageProfile gpu_prep;
  ModelProfile model;
  BatcherConfig batcher;
  GpuMemoryConfig gpu_memory;
  RunMode mode = RunMode::EndToEnd;
  JitterConfig jitter;
  EnergyModel energy;
  std::map<std::string, ImageClass> images;  // catalog, keyed by name
  std::optional<TwoStageSpec> two_stage;

  ScenarioConfig() {
    images["small"] = small_image();
    images["medium"] = medium_image();
    images["large"] = large_image();
    workload.mix["medium"] = 1.0;
  }
};

}  // namespace servesim
