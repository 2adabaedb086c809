#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace rieszlab {

/// Global worker-thread count for parallel loops (1 = serial).
int& thread_count();

// Static partition of [0, n) over worker threads.  Each chunk writes only its
// own outputs, so results are independent of the thread count.
template <typename F>
void parallel_for(long n, F&& body, int threads = 0) {
  if (threads <= 0) threads = thread_count();
  threads = static_cast<int>(std::max(1L, std::min<long>(threads, n)));
  if (threads == 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const long chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (long i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace rieszlab
