#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace servesim {

/// Deterministic per-source random stream. Identical (seed, stream_id)
/// produce identical draw sequences on every platform, so we avoid
/// std::uniform_* distributions (their output is implementation-defined)
/// and generate everything from a splitmix64 chain.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view stream_id)
      : state_(seed ^ fnv1a(stream_id)) {
    // decorrelate nearby seeds
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi], inclusive.
  std::uint64_t next_range(std::uint64_t lo, std::uint64_t hi) {
    if (hi < lo) throw std::invalid_argument("next_range: hi < lo");
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return next_u64();  // full range
    // multiply-shift; bias is < 2^-64 per draw, irrelevant here
    const unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<std::uint64_t>(m >> 64);
  }

  /// Sample an index from explicit categorical weights (need not sum to 1).
  std::size_t next_categorical(const std::vector<double>& weights) {
    double total = 0;
    for (double w : weights) total += w;
    if (total <= 0) throw std::invalid_argument("categorical: no mass");
    double x = next_double() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      x -= weights[i];
      if (x < 0) return i;
    }
    return weights.size() - 1;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  std::uint64_t state_;
};

}  // namespace servesim
