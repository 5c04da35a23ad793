#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace diffraster {

// Runs fn(0..count-1) across `workers` threads. Each index must write only to
// its own slot of any shared output; with that discipline the result is
// independent of the worker count and of scheduling, which is what the
// determinism contract requires. Reductions over per-index partial buffers
// happen on the caller side, in index order.
inline void parallel_for_index(int count, int workers,
                               const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (workers <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto run = [&] {
    for (;;) {
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) break;
      fn(i);
    }
  };
  const int n_threads = std::min(workers, count);
  std::vector<std::thread> pool;
  pool.reserve(n_threads - 1);
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

}  // namespace diffraster
