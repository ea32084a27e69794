#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gkp {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work items are
/// claimed dynamically, so callers must write results by index. If any item
/// throws, the exception of the lowest failing index is rethrown after all
/// workers join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn &&fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t count = workers < n ? workers : n;
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w) pool.emplace_back(run);
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace gkp
