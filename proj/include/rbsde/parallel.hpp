#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rbsde {

/// Worker count for per-layer node loops. Outputs never depend on it: every
/// node is written by exactly one iteration and reductions run serially.
struct Exec {
  int workers = 1;
};

/// Runs fn(i) for i in [0, count). An exception thrown by any iteration is
/// rethrown after the loop; when several throw, the lowest index wins so the
/// reported error does not depend on scheduling.
template <typename Fn>
void parallel_for(const Exec& exec, std::size_t count, Fn&& fn) {
#ifdef _OPENMP
  if (exec.workers > 1 && count > 1) {
    const auto n = static_cast<std::int64_t>(count);
    std::exception_ptr first;
    std::int64_t first_index = n;
    std::mutex guard;
#pragma omp parallel for num_threads(exec.workers) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (i < first_index) {
          first_index = i;
          first = std::current_exception();
        }
      }
    }
    if (first) std::rethrow_exception(first);
    return;
  }
#endif
  for (std::size_t i = 0; i < count; ++i) fn(i);
}

}  // namespace rbsde
