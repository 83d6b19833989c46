// SPDX-License-Identifier: Apache-2.0
#include "llsa/parallel.hpp"

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace llsa {

namespace {

std::atomic<unsigned> g_thread_count{0};

unsigned resolved_thread_count() {
  unsigned n = g_thread_count.load(std::memory_order_relaxed);
  if (n == 0) {
    n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
  }
  return n;
}

}  // namespace

void set_thread_count(unsigned count) {
  g_thread_count.store(count, std::memory_order_relaxed);
}

unsigned thread_count() { return resolved_thread_count(); }

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(resolved_thread_count(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::exception_ptr first_error;
  std::atomic_flag error_claimed = ATOMIC_FLAG_INIT;
  auto run = [&](std::size_t begin, std::size_t end) {
    try {
      body(begin, end);
    } catch (...) {
      if (!error_claimed.test_and_set()) first_error = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(run, begin, end);
  }
  run(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t parallel_sum(
    std::size_t n,
    const std::function<std::uint64_t(std::size_t, std::size_t)>& body) {
  std::atomic<std::uint64_t> total{0};
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    total.fetch_add(body(begin, end), std::memory_order_relaxed);
  });
  return total.load();
}

}  // namespace llsa
