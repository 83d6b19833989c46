// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "llsa/attention.hpp"
#include "llsa/config.hpp"
#include "llsa/indexmap.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/types.hpp"

namespace llsa {

struct GradientSet {
  FeatureMatrix dq;
  FeatureMatrix dk;
  FeatureMatrix dv;
};

// Key/value half of the backward pass, driven entirely by the transposed
// (key-major) indices — no dense mask is ever formed. For each key block the
// owning worker walks exactly the query blocks that selected it, recomputes
// the softmax weights from the saved per-token (max, denominator), and
// accumulates that block's dk/dv rows; coarse-level accumulators are then
// redistributed to the fine rows through the pooling adjoint (each fine row
// receives its group's gradient divided by B^l, which cancels the B^l KV
// weight in ScaleKV mode). Writes are disjoint per key block, so no atomics
// are needed and results are bitwise identical across thread counts.
// dk/dv are allocated and zeroed inside. mul_accs, when given, receives the
// multiply-accumulate count of the pass.
void kv_backward(const FeatureMatrix& d_out, const ForwardState& saved,
                 const FeatureMatrix& q, const Pyramid& pyr_k,
                 const Pyramid& pyr_v,
                 const std::vector<TransposedIndices>& transposed,
                 const ValidatedConfig& cfg, FeatureMatrix& dk,
                 FeatureMatrix& dv, std::uint64_t* mul_accs = nullptr);

// Full gradient of <output, d_out> with respect to q, k, v. Top-K indices
// are treated as constants (no gradient flows through the selection).
// Phases: (1) per-token D = rowsum(d_out * output); (2) query-major dq over
// the plan; (3) key-major dk/dv via kv_backward. Throws StaleState when the
// saved state's checksum does not match these inputs, ShapeMismatch on
// dimension disagreements.
GradientSet llsa_backward(const FeatureMatrix& d_out,
                          const ForwardState& saved, const FeatureMatrix& q,
                          const FeatureMatrix& k, const FeatureMatrix& v,
                          const Pyramid& pyr_k, const Pyramid& pyr_v,
                          const EnrichedKVPlan& plan,
                          const std::vector<TransposedIndices>& transposed,
                          const ValidatedConfig& cfg,
                          std::uint64_t* mul_accs = nullptr);

}  // namespace llsa
