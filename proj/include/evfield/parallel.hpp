#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace evfield {

// Worker count used by parallel_for; 0 means std::thread::hardware_concurrency().
void set_thread_count(std::size_t threads);
std::size_t thread_count();

// Runs body(i, worker) for i in [0, count); worker < min(thread_count(), count)
// identifies the calling thread so it can own scratch state.
template <typename Body>
void parallel_for_workers(std::size_t count, Body&& body) {
  const std::size_t workers = std::min(thread_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i, std::size_t{0});
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&](std::size_t worker) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i, worker);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run, t);
  run(0);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Runs body(i) for i in [0, count). Each index is processed exactly once;
// callers that write to per-index slots get results independent of thread
// count. The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(std::size_t count, Body&& body) {
  parallel_for_workers(count, [&](std::size_t i, std::size_t) { body(i); });
}

}  // namespace evfield
