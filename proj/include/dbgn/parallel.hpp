#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dbgn {

/// Runs fn(task) for task in [0, n) on up to `workers` threads. Callers write
/// into per-task slots and reduce afterwards in task order, so results do not
/// depend on the worker count. The first exception thrown is rethrown.
template <typename Fn>
void parallel_tasks(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t t = 0; t < n; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t t = next.fetch_add(1);
        if (t >= n) return;
        try {
          fn(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Fixed-size row batches [begin, end) covering [0, rows).
inline std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t rows, std::size_t batch_size) {
  if (batch_size == 0) batch_size = 4096;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < rows; b += batch_size) out.emplace_back(b, std::min(rows, b + batch_size));
  return out;
}

}  // namespace dbgn
