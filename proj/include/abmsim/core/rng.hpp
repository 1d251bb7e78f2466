#pragma once

#include <array>
#include <cstdint>

namespace abmsim {

/// Purpose of a random draw. Part of the stream key so that independent
/// sub-models never share random numbers.
enum class Channel : std::uint32_t {
  exposure = 0,
  progression = 1,
  behavior = 2,
  vaccine = 3,
  test = 4,
  gumbel = 5,
  population = 6,
  graph = 7,
  seeding = 8,
  provider = 9,
  calibration = 10,
};

/// Counter-based stream (Philox4x32-10) keyed by (seed, step, agent, channel).
///
/// A stream is a pure function of its key: the n-th draw depends only on the
/// key and n, never on which thread evaluates it or what was drawn elsewhere.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t step, std::uint64_t agent,
            Channel channel) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform on (0, 1); never returns 0.
  double uniform_open() noexcept;

  /// Standard Gumbel variate, -log(-log U).
  double gumbel() noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t step() const noexcept { return step_; }
  std::uint64_t agent() const noexcept { return agent_; }
  Channel channel() const noexcept { return channel_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t step_;
  std::uint64_t agent_;
  Channel channel_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> out_{};
  int cursor_ = 4;  // in 64-bit halves: 0 or 2 valid, 4 = empty
};

/// Philox4x32-10 block function, exposed for tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Stateless 64-bit mix of a key tuple; used for priorities and hashing.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace abmsim
