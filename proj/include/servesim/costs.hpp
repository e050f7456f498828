#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "servesim/types.hpp"

namespace servesim {

/// All duration models round half-up to integer microseconds.
inline std::uint64_t round_half_up_us(double us) {
  if (us < 0) throw std::invalid_argument("negative duration");
  return static_cast<std::uint64_t>(std::floor(us + 0.5));
}

inline double prep_item_cost_us(const StageProfile& p, const ImageClass& img) {
  return (p.per_byte_ns * static_cast<double>(img.compressed_bytes) +
          p.per_pixel_ns * static_cast<double>(img.pixels())) /
         1000.0;
}

/// CPU pool: one image per process, full fixed cost each invocation.
/// GPU streams: one fixed launch cost amortized over the whole batch.
inline std::uint64_t prep_service_time(const StageProfile& profile,
                                       PrepPlacement placement,
                                       std::span<const ImageClass> batch) {
  if (batch.empty()) throw std::invalid_argument("prep: empty batch");
  if (placement == PrepPlacement::CpuPool && batch.size() != 1) {
    throw std::invalid_argument("prep: CPU processes take one image each");
  }
  double us = profile.fixed_us;
  for (const ImageClass& img : batch) us += prep_item_cost_us(profile, img);
  return round_half_up_us(us);
}

inline std::uint64_t transfer_time(std::uint64_t bytes, const LinkModel& link) {
  if (link.bandwidth_bytes_per_us <= 0) {
    throw std::invalid_argument("transfer: nonpositive bandwidth");
  }
  const double frac =
      static_cast<double>(bytes) / link.bandwidth_bytes_per_us;
  return link.latency_us + static_cast<std::uint64_t>(std::ceil(frac));
}

inline std::uint64_t inference_batch_time(const ModelProfile& model,
                                          std::uint32_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("inference: empty batch");
  return round_half_up_us(model.alpha_us + model.beta_us * batch_size);
}

struct BrokerDelay {
  std::uint64_t publish_us = 0;
  std::uint64_t consume_us = 0;
};

inline BrokerDelay broker_delay(BrokerKind kind, std::uint64_t message_bytes,
                                const BrokerProfile& profile) {
  if (kind == BrokerKind::Fused) {
    throw std::invalid_argument("broker_delay: fused path has no broker");
  }
  const double ser = profile.per_byte_ns * static_cast<double>(message_bytes) /
                     1000.0;
  return {round_half_up_us(profile.publish_us + ser),
          round_half_up_us(profile.consume_us + ser)};
}

}  // namespace servesim
