#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace abmsim {

/// Number of workers to use when the caller passes 0.
inline unsigned default_threads() noexcept {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

/// Static-partition parallel loop. `fn(begin, end, chunk)` is called once per
/// chunk; chunk boundaries depend only on `n` and `threads`, so per-chunk
/// partial results can be reduced in chunk order deterministically.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = default_threads();
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(threads, n / 4096 + 1));
  if (chunks == 1) {
    fn(std::size_t{0}, n, 0u);
    return;
  }
  const std::size_t per = (n + chunks - 1) / chunks;
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::jthread> pool;
  pool.reserve(chunks - 1);
  auto body = [&](std::size_t c) {
    try {
      const std::size_t b = c * per;
      const std::size_t e = std::min(n, b + per);
      if (b < e) fn(b, e, static_cast<unsigned>(c));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  for (std::size_t c = 1; c < chunks; ++c) pool.emplace_back(body, c);
  body(0);
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Number of chunks parallel_for will use; size per-chunk accumulators with it.
inline std::size_t parallel_chunks(std::size_t n, unsigned threads) noexcept {
  if (threads == 0) threads = default_threads();
  return std::max<std::size_t>(1, std::min<std::size_t>(threads, n / 4096 + 1));
}

}  // namespace abmsim
