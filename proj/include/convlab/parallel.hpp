#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace convlab {

/// Runs body(b) for b in [0, num_blocks) on up to `workers` threads.
/// Callers assign each block its own output slot (and its own split RNG
/// stream) and reduce slots in block order, so results do not depend on the
/// worker count or scheduling.
inline void parallel_blocks(int num_blocks, int workers, const std::function<void(int)>& body) {
  if (num_blocks <= 0) return;
  if (workers <= 1 || num_blocks == 1) {
    for (int b = 0; b < num_blocks; ++b) body(b);
    return;
  }
  int threads = std::min(workers, num_blocks);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        int b = next.fetch_add(1);
        if (b >= num_blocks) return;
        body(b);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace convlab
