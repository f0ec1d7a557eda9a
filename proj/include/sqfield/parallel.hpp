#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sqfield {

inline int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs task(i) for i in [0, count) on up to `workers` threads. Items are
/// claimed dynamically, so callers must write results into slot i only; the
/// outcome is then independent of the schedule. The first exception thrown
/// by any task is rethrown after all threads have joined.
template <class Task>
void parallel_for(std::size_t count, int workers, Task&& task) {
  if (count == 0) return;
  const std::size_t n_threads =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(body);
    body();
  }
  if (error) std::rethrow_exception(error);
}

/// Splits [0, n_items) into fixed-size chunks (independent of the worker
/// count), maps each chunk to a partial result, and returns the partials in
/// chunk order for a deterministic merge.
template <class Partial, class ChunkFn>
std::vector<Partial> map_chunks(std::size_t n_items, std::size_t chunk, int workers, ChunkFn&& fn) {
  chunk = std::max<std::size_t>(1, chunk);
  const std::size_t n_chunks = (n_items + chunk - 1) / chunk;
  std::vector<Partial> partials(n_chunks);
  parallel_for(n_chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(n_items, begin + chunk);
    partials[c] = fn(begin, end, c);
  });
  return partials;
}

}  // namespace sqfield
