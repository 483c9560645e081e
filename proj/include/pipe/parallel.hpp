#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pipe {

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Results must be written to per-index slots so
// that output does not depend on the worker count; reductions are then merged
// by the caller in index order.
template <typename F>
void parallel_for_index(int n, int workers, F&& fn) {
  if (workers <= 0) workers = default_workers();
  if (workers == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nthreads = std::min(workers, n);
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  for (int w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += nthreads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace pipe
