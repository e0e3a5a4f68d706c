#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace mia {

/// Runs body(i) for i in [0, n) on up to `workers` threads. `body` must not
/// throw; workers stop picking up new items once `stop` becomes true.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, const std::atomic<bool>& stop, Body body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i; !stop.load(std::memory_order_relaxed) && (i = next++) < n;) body(i);
  };
  if (workers == 1) {
    work();
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
}

}  // namespace mia
