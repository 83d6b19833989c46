// SPDX-License-Identifier: Apache-2.0
#include "llsa/indexmap.hpp"

#include <algorithm>
#include <atomic>
#include <memory>
#include <string>

#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

TransposedIndices transpose_indices(const LevelIndices& idx,
                                    std::uint32_t key_blocks) {
  const std::size_t total = idx.indices.size();

  // Count pass. Atomic increments commute, so the histogram is exact no
  // matter how rows are split across workers.
  auto counts = std::make_unique<std::atomic<std::uint32_t>[]>(key_blocks);
  for (std::uint32_t b = 0; b < key_blocks; ++b) {
    counts[b].store(0, std::memory_order_relaxed);
  }
  std::atomic<bool> out_of_range{false};
  parallel_for(total, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      const std::uint32_t b = idx.indices[e];
      if (b >= key_blocks) {
        out_of_range.store(true, std::memory_order_relaxed);
        return;
      }
      counts[b].fetch_add(1, std::memory_order_relaxed);
    }
  });
  if (out_of_range.load()) {
    throw IndexOutOfRange("selection entry >= key block count " +
                          std::to_string(key_blocks));
  }

  TransposedIndices out;
  out.key_blocks = key_blocks;
  out.offsets.resize(key_blocks + 1);
  out.offsets[0] = 0;
  for (std::uint32_t b = 0; b < key_blocks; ++b) {
    out.offsets[b + 1] = out.offsets[b] + counts[b].load();
  }
  out.flat_queries.resize(total);

  // Scatter pass: running write cursors, one per key block. The order in
  // which concurrent rows land inside a segment is arbitrary here...
  auto cursor = std::make_unique<std::atomic<std::uint32_t>[]>(key_blocks);
  for (std::uint32_t b = 0; b < key_blocks; ++b) {
    cursor[b].store(out.offsets[b], std::memory_order_relaxed);
  }
  parallel_for(idx.query_blocks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::uint32_t b : idx.row(static_cast<std::uint32_t>(i))) {
        const std::uint32_t pos = cursor[b].fetch_add(1);
        out.flat_queries[pos] = static_cast<std::uint32_t>(i);
      }
    }
  });

  // ...so sort each segment into the canonical ascending order.
  parallel_for(key_blocks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      std::sort(out.flat_queries.begin() + out.offsets[b],
                out.flat_queries.begin() + out.offsets[b + 1]);
    }
  });
  return out;
}

std::vector<TransposedIndices> transpose_all(const SelectionResult& sel,
                                             const ValidatedConfig& cfg) {
  if (sel.per_level.size() != cfg.levels()) {
    throw ShapeMismatch("selection has " +
                        std::to_string(sel.per_level.size()) +
                        " levels, config expects " +
                        std::to_string(cfg.levels()));
  }
  std::vector<TransposedIndices> out;
  out.reserve(cfg.levels());
  for (std::uint32_t l = 0; l < cfg.levels(); ++l) {
    out.push_back(transpose_indices(sel.per_level[l], cfg.level_blocks(l)));
  }
  return out;
}

}  // namespace llsa
