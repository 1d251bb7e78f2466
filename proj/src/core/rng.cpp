#include "abmsim/core/rng.hpp"

#include <cmath>

namespace abmsim {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t step, std::uint64_t agent,
                     Channel channel) noexcept
    : seed_(seed), step_(step), agent_(agent), channel_(channel) {}

void RngStream::refill() noexcept {
  const std::array<std::uint32_t, 4> ctr = {
      block_++, static_cast<std::uint32_t>(agent_),
      static_cast<std::uint32_t>(step_),
      static_cast<std::uint32_t>(channel_) |
          (static_cast<std::uint32_t>(agent_ >> 32) << 8) |
          (static_cast<std::uint32_t>(step_ >> 32) << 20)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  out_ = philox4x32(ctr, key);
  cursor_ = 0;
}

std::uint64_t RngStream::next_u64() noexcept {
  if (cursor_ >= 4) refill();
  const std::uint64_t v = (static_cast<std::uint64_t>(out_[cursor_]) << 32) |
                          out_[cursor_ + 1];
  cursor_ += 2;
  return v;
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::gumbel() noexcept { return -std::log(-std::log(uniform_open())); }

}  // namespace abmsim
