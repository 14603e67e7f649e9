#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace stablesde {

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static block partition of [0, n) across workers. Work items must be
// independent; results keyed by index stay deterministic under any schedule.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  const int t = effective_threads(threads);
  if (t <= 1 || n < 2) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  const std::int64_t chunk = (n + t - 1) / t;
  for (int w = 0; w < t; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace stablesde
