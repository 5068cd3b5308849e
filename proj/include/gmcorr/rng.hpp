#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace gmcorr {

/// Philox4x32-10 counter-based generator. The key is the master seed and the
/// upper half of the counter is the stream (trajectory) index, so every
/// trajectory owns an independent stream that does not depend on scheduling.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;

  Philox4x32(std::uint64_t key, std::uint64_t stream) : key_{lo(key), hi(key)}, stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (lane_ == 2) {
      block_ = generate(counter_++);
      lane_ = 0;
    }
    const auto i = lane_++;
    return (static_cast<std::uint64_t>(block_[2 * i + 1]) << 32) | block_[2 * i];
  }

  /// Raw block for counter value `ctr` in this stream.
  std::array<std::uint32_t, 4> generate(std::uint64_t ctr) const {
    std::array<std::uint32_t, 4> x{lo(ctr), hi(ctr), lo(stream_), hi(stream_)};
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * x[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * x[2];
      x = {hi(p1) ^ x[1] ^ k[0], lo(p1), hi(p0) ^ x[3] ^ k[1], lo(p0)};
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    return x;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
  static constexpr std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int lane_ = 2;
};

/// Random source owned by one trajectory.
class TrajectoryRng {
 public:
  TrajectoryRng(std::uint64_t master_seed, std::uint64_t trajectory_index) : engine_(master_seed, trajectory_index) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal.
  double normal() { return normal_(engine_); }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace gmcorr
