#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace fmu {

/// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs body(i) for i in [0, n) on a static partition of worker threads.
/// Each index is visited exactly once; the first exception thrown by any
/// worker is rethrown on the calling thread after all workers join.
template <class Body>
void parallel_for(Eigen::Index n, Body&& body) {
  if (n <= 0) return;
  const auto workers =
      static_cast<Eigen::Index>(std::min<Eigen::Index>(thread_count(), n));
  if (workers <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Eigen::Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const Eigen::Index begin = n * w / workers;
      const Eigen::Index end = n * (w + 1) / workers;
      try {
        for (Eigen::Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        failures[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace fmu
