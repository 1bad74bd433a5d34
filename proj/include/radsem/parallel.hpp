#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace radsem {

// Splits [0, n) into at most `threads` contiguous chunks and runs
// fn(begin, end, chunk_id) on each. Chunk boundaries depend only on
// (n, threads); value-level determinism across thread counts is the
// caller's responsibility.
inline void parallel_chunks(std::size_t n, unsigned threads,
                            const std::function<void(std::size_t, std::size_t, unsigned)>& fn) {
  if (n == 0) return;
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    fn(0, n, 0);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, static_cast<std::size_t>(w) * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace radsem
