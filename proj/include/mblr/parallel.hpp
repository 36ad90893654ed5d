#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mblr {

/// Worker cap: MBLR_THREADS if set to a positive integer, else the hardware
/// concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("MBLR_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Tasks must write only to their own slot of
/// any shared output; callers reduce in index order afterwards, so results do
/// not depend on the worker count. The first exception (lowest index) is
/// rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto work = [&] {
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
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mblr
