// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "llsa/config.hpp"
#include "llsa/selection.hpp"

namespace llsa {

// Key-major view of a LevelIndices table. For key block b, the segment
// offsets[b] .. offsets[b+1] of flat_queries lists every query block whose
// selection row contains b, sorted ascending. offsets is non-decreasing with
// offsets[0] = 0 and offsets[key_blocks] = query_blocks * k.
struct TransposedIndices {
  std::uint32_t key_blocks = 0;
  std::vector<std::uint32_t> offsets;       // key_blocks + 1 entries
  std::vector<std::uint32_t> flat_queries;  // query_blocks * k entries

  std::span<const std::uint32_t> segment(std::uint32_t b) const {
    return {flat_queries.data() + offsets[b], offsets[b + 1] - offsets[b]};
  }
};

// Inverts query-major selection indices into the key-major layout in three
// linear passes — count, exclusive prefix sum, scatter — plus a canonical
// per-segment ascending sort so the result is identical for every thread
// count (the parallel scatter alone would order segments arbitrarily).
// Throws IndexOutOfRange if any entry is >= key_blocks.
TransposedIndices transpose_indices(const LevelIndices& idx,
                                    std::uint32_t key_blocks);

// One transposition per level, 0..L-1, with that level's key-block count.
std::vector<TransposedIndices> transpose_all(const SelectionResult& sel,
                                             const ValidatedConfig& cfg);

}  // namespace llsa
