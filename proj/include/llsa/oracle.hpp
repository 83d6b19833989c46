// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "llsa/attention.hpp"
#include "llsa/attention_grad.hpp"
#include "llsa/config.hpp"
#include "llsa/indexmap.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/selection.hpp"
#include "llsa/types.hpp"

// Reference implementations used to check the fast paths. They are written
// as independent single-threaded loops — deliberately quadratic, sharing no
// kernels with the code they verify — and all correctness oracles refuse to
// run beyond kOracleMaxRows so they cannot sneak into benchmarks.
// mask_kv_backward is the one deliberate exception: it is the measured
// mask-based baseline of the key/value backward benchmark, so it must run at
// benchmark sizes and is not capped.
namespace llsa::oracle {

inline constexpr std::size_t kOracleMaxRows = 2048;

// Plain stable softmax attention over all n keys, materializing each logit
// row. O(n^2 * d).
FeatureMatrix dense_attention(const FeatureMatrix& q, const FeatureMatrix& k,
                              const FeatureMatrix& v, real scale);

// Ground truth for the sparse forward: materializes every query block's
// enriched KV set densely (including the mode's weighting) and applies a
// two-pass softmax per token.
FeatureMatrix effective_attention(const FeatureMatrix& q,
                                  const FeatureMatrix& k,
                                  const FeatureMatrix& v, const Pyramid& pyr_k,
                                  const Pyramid& pyr_v,
                                  const EnrichedKVPlan& plan,
                                  const ValidatedConfig& cfg);

// Transposition by way of a dense query-block x key-block boolean mask whose
// columns are read off in order.
TransposedIndices mask_transpose(const LevelIndices& idx,
                                 std::uint32_t key_blocks);

// Full backward pass computed from scratch: dense per-token softmax
// recomputation, query-major dq, and per-level dense block masks for dk/dv.
GradientSet mask_backward(const FeatureMatrix& d_out, const FeatureMatrix& q,
                          const FeatureMatrix& k, const FeatureMatrix& v,
                          const Pyramid& pyr_k, const Pyramid& pyr_v,
                          const SelectionResult& sel,
                          const ValidatedConfig& cfg);

// Benchmark baseline for the key/value backward: builds a dense block mask
// per level from the selection, then walks every (key block, query block)
// cell — O(T^2) mask construction and scan — doing the real accumulation
// only on marked cells. Same math as kv_backward, mask-driven lookup,
// intentionally not size-capped.
void mask_kv_backward(const FeatureMatrix& d_out, const ForwardState& saved,
                      const FeatureMatrix& q, const Pyramid& pyr_k,
                      const Pyramid& pyr_v, const SelectionResult& sel,
                      const ValidatedConfig& cfg, FeatureMatrix& dk,
                      FeatureMatrix& dv);

struct GradCheckReport {
  real max_rel_error = real(0);
  char worst_matrix = '?';  // 'q', 'k', or 'v'
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  real step = real(0);
  std::size_t coords_checked = 0;
};

// Central-difference check of llsa_backward on the scalar loss
// <output, cotangent>. The selection plan is frozen from the unperturbed
// inputs (Top-K indices are constants of the differentiated function); key
// and value pyramids are rebuilt per evaluation so pooling is part of the
// graph. Errors are |fd - analytic| / max(1, |fd|, |analytic|), i.e.
// relative for large gradients and absolute near zero — inputs are expected
// to be unit-scale. Checks every coordinate of q, k, v unless max_coords > 0
// caps the count, in which case a deterministic subsample (seeded by
// subsample_seed) is used. Double-precision builds only: PrecisionError
// otherwise.
GradCheckReport finite_diff_check(const FeatureMatrix& q,
                                  const FeatureMatrix& k,
                                  const FeatureMatrix& v,
                                  const FeatureMatrix& cotangent,
                                  const ValidatedConfig& cfg,
                                  real step = real(1e-6),
                                  std::size_t max_coords = 0,
                                  std::uint64_t subsample_seed = 0);

}  // namespace llsa::oracle
