// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace llsa {

// Process-wide worker count for parallel_for / parallel_sum.
// 0 (the default) means std::thread::hardware_concurrency().
void set_thread_count(unsigned count);
unsigned thread_count();

// Runs body(begin, end) over a static contiguous partition of [0, n).
// Each index is handled by exactly one worker, so any loop whose iterations
// write disjoint outputs produces bitwise-identical results for every thread
// count, including 1. Exceptions thrown by workers are rethrown on the
// calling thread.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

// Same partitioning; sums the per-chunk return values. Addition of unsigned
// counters is associative and commutative, so the total is exact and
// independent of the partition.
std::uint64_t parallel_sum(
    std::size_t n,
    const std::function<std::uint64_t(std::size_t, std::size_t)>& body);

}  // namespace llsa
