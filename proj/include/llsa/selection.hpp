// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "llsa/config.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/types.hpp"

namespace llsa {

// Per-level sparse selection table. Row i lists, for level-`level` query
// block i, the `k` selected level-`level` key-block indices. Rows are sorted
// ascending and duplicate-free; every entry is a valid key-block index for
// that level.
struct LevelIndices {
  std::uint32_t level = 0;
  std::uint32_t query_blocks = 0;
  std::uint32_t k = 0;
  std::vector<std::uint32_t> indices;  // query_blocks * k entries

  std::span<const std::uint32_t> row(std::uint32_t i) const {
    return {indices.data() + std::size_t(i) * k, k};
  }
  std::span<std::uint32_t> row(std::uint32_t i) {
    return {indices.data() + std::size_t(i) * k, k};
  }
};

// Output of the hierarchical Top-K pass. per_level[l] holds level-l indices
// for l = 0..L-1; the level-L candidate set is always the full coarsest block
// list (coarsest_full). mul_accs counts every multiply-accumulate spent on
// score matrices, and is identical across reruns and thread counts.
struct SelectionResult {
  std::vector<LevelIndices> per_level;
  bool coarsest_full = false;
  std::uint64_t mul_accs = 0;
};

// Coarsest stage: scores all level-L key tokens against every level-L query
// token (the full similarity matrix) and keeps the top_k best per row.
// Ties prefer the smaller index; each output row is sorted ascending.
// out_level names the level of the resulting table (L-1 in the full pass).
LevelIndices select_coarsest(const FeatureMatrix& q_top,
                             const FeatureMatrix& k_top, std::uint32_t top_k,
                             real scale, std::uint32_t out_level,
                             std::uint64_t* mul_accs = nullptr);

// Refinement stage: for each level-l query block i, gathers the
// parent.k * block_size candidate tokens named by parent row i, scores the
// block's tokens against them, and keeps the top_k best per row. Candidate
// column c maps back to token index parent[i][c / B] * B + c % B. The result
// is the level-(l-1) table.
LevelIndices select_level(const FeatureMatrix& q_level,
                          const FeatureMatrix& k_level,
                          const LevelIndices& parent, std::uint32_t top_k,
                          real scale, std::uint32_t block_size,
                          std::uint64_t* mul_accs = nullptr);

// Full coarse-to-fine pass over the query/key pyramids.
SelectionResult hierarchical_topk(const Pyramid& pyr_q, const Pyramid& pyr_k,
                                  const ValidatedConfig& cfg);

// Line-oriented debug dump: one line per table row,
//   "level <l> / row <i>: <idx> <idx> ..."
void dump_selection(const SelectionResult& sel, std::ostream& out);

}  // namespace llsa
