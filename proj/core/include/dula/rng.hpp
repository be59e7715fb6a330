#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace dula {

/// Philox4x32-10 block function.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Sub-stream tags; each (seed, stream id, purpose) triple owns a disjoint counter range.
enum class StreamPurpose : std::uint32_t {
  kNoise = 0,
  kBatching = 1,
  kData = 2,
  kInit = 3,
};

/// Counter-based random stream keyed by a 64-bit seed and a stream id.
///
/// Satisfies UniformRandomBitGenerator so it can drive <random> distributions
/// and std::shuffle. Two streams with different (seed, stream, purpose) never
/// share a counter block.
class Rng {
 public:
  using result_type = std::uint32_t;

  explicit Rng(std::uint64_t seed, std::uint32_t stream = 0,
               StreamPurpose purpose = StreamPurpose::kNoise) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double normal() { return normal_(*this); }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool coin(double p = 0.5) noexcept { return uniform() < p; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream() const noexcept { return stream_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint32_t stream_;
  std::uint32_t purpose_;
  std::uint64_t block_index_ = 0;
  PhiloxCounter buffer_{};
  unsigned cursor_ = 4;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dula
