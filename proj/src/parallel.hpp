#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace orts::detail {

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0: hardware
/// concurrency). Rethrows the first exception after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          fn(i);
        }
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) {
          error = std::current_exception();
        }
        failed = true;
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

}  // namespace orts::detail
