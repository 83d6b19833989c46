// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "llsa/config.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/selection.hpp"
#include "llsa/types.hpp"

namespace llsa {

// One KV contribution: the block_size tokens of key block `block` at pyramid
// level `level`, folded in with `weight` (B^level when built by build_plan;
// hand-built plans may carry other weights for testing).
struct PlanEntry {
  std::uint32_t level = 0;
  std::uint32_t block = 0;
  real weight = real(1);
};

// Per fine query block: the ordered list of (level, block, weight) entries
// whose tokens form that block's enriched KV set. Entries are stored in
// canonical order — level ascending, block ascending within a level — and
// every block has the same entry count, so the forward pass streams them in
// a fixed order regardless of thread count.
struct EnrichedKVPlan {
  std::uint32_t fine_blocks = 0;
  std::uint32_t entries_per_block = 0;
  std::vector<PlanEntry> entries;  // fine_blocks * entries_per_block

  std::span<const PlanEntry> block(std::uint32_t i) const {
    return {entries.data() + std::size_t(i) * entries_per_block,
            entries_per_block};
  }
};

// Assembles the plan from the selection tables: for fine block i and level
// l <= enrich_levels, the selected blocks come from per_level[l] row
// i / B^l; when enrichment reaches the coarsest level, every coarsest key
// block is appended. Entry count always equals effective_block_count(cfg).
EnrichedKVPlan build_plan(const SelectionResult& sel,
                          const ValidatedConfig& cfg);

// Everything backward needs besides the inputs: the attention output, the
// per-token streaming-softmax statistics, and a checksum tying the state to
// the exact inputs it was computed from.
struct ForwardState {
  FeatureMatrix output;
  std::vector<real> row_max;    // running maximum m_t (0 when safe_softmax off)
  std::vector<real> row_denom;  // softmax denominator l_t, always > 0
  std::uint64_t mul_accs = 0;   // score multiply-accumulates
  std::uint64_t input_checksum = 0;
};

// Checksum over shapes, config, plan layout, and raw input bytes; backward
// recomputes it to reject stale or mismatched saved state.
std::uint64_t input_checksum(const FeatureMatrix& q, const FeatureMatrix& k,
                             const FeatureMatrix& v, const EnrichedKVPlan& plan,
                             const ValidatedConfig& cfg);

// Streaming block attention over each query's enriched KV set. For a level-l
// entry with weight W: ScaleKV multiplies the gathered keys and values by W;
// LogitBias leaves them unscaled and adds ln W to the logits. Logits are
// scale * q.k'; the softmax runs in one pass with running-max rescaling
// (safe_softmax), accumulating the numerator and denominator per token.
// Throws NonFiniteError if any output element is non-finite.
ForwardState llsa_forward(const FeatureMatrix& q, const FeatureMatrix& k,
                          const FeatureMatrix& v, const Pyramid& pyr_k,
                          const Pyramid& pyr_v, const EnrichedKVPlan& plan,
                          const ValidatedConfig& cfg);

}  // namespace llsa
