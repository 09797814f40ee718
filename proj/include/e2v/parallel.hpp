#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "e2v/common.hpp"

namespace e2v {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once and writes only its own output slot, so results do
/// not depend on scheduling. The first exception thrown is rethrown.
template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace e2v
