#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nlspec {

/// Number of workers to use when the caller passes 0.
inline unsigned default_threads() noexcept {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
///
/// Indices are split into contiguous chunks; fn must only write to state
/// owned by index i, so results do not depend on the worker count. The first
/// exception thrown (lowest index) is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = default_threads();
  const std::size_t workers = std::min<std::size_t>(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::mutex guard;
  std::exception_ptr failure;
  std::size_t failed_at = count;
  const std::size_t chunk = (count + workers - 1) / workers;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(guard);
            if (i < failed_at) {
              failed_at = i;
              failure = std::current_exception();
            }
            return;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

} // namespace nlspec
