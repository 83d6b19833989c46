// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "llsa/types.hpp"

namespace llsa {

// How coarse key/value blocks are folded into attention.
//   ScaleKV:   keys and values of a level-l block are multiplied by B^l.
//   LogitBias: keys and values stay unscaled; ln(B^l) is added to the logits.
enum class ReweightMode : std::uint32_t { ScaleKV = 0, LogitBias = 1 };

const char* to_string(ReweightMode mode);

// User-facing knobs. Validate with validate_config() before use.
struct LLSAConfig {
  std::uint64_t n = 0;              // sequence length
  std::uint32_t d = 0;              // feature dimension
  std::uint32_t block_size = 0;     // B >= 2, tokens per block at every level
  std::uint32_t top_k = 0;          // K, blocks kept per query row and level
  std::uint32_t levels = 0;         // L, pooling depth
  std::uint32_t enrich_levels = 0;  // L_e <= L, coarse levels appended to KV
  real softmax_scale = real(0);     // 0 means 1/sqrt(d)
  ReweightMode reweight_mode = ReweightMode::ScaleKV;
  bool safe_softmax = true;         // running-max rescaling in the streaming softmax
};

// Largest admissible level count for a given sequence length and block size:
// the greatest L with B^(L+1) <= n, i.e. floor(log_B n) - 1 (0 if none).
std::uint32_t max_levels(std::uint64_t n, std::uint32_t block_size);

// An LLSAConfig that passed validation, plus derived quantities the rest of
// the library keeps asking for. Immutable.
class ValidatedConfig {
 public:
  std::uint64_t n() const { return cfg_.n; }
  std::uint32_t d() const { return cfg_.d; }
  std::uint32_t block_size() const { return cfg_.block_size; }
  std::uint32_t top_k() const { return cfg_.top_k; }
  std::uint32_t levels() const { return cfg_.levels; }
  std::uint32_t enrich_levels() const { return cfg_.enrich_levels; }
  real scale() const { return scale_; }
  ReweightMode mode() const { return cfg_.reweight_mode; }
  bool safe_softmax() const { return cfg_.safe_softmax; }
  const LLSAConfig& raw() const { return cfg_; }

  // B^l for l in [0, levels]; fits u64 by construction (B^(L+1) <= n).
  std::uint64_t pow_block(std::uint32_t l) const { return pow_b_[l]; }
  // Tokens at level l: n / B^l.
  std::uint32_t level_tokens(std::uint32_t l) const {
    return static_cast<std::uint32_t>(cfg_.n / pow_b_[l]);
  }
  // Key/query blocks at level l: n / B^(l+1).
  std::uint32_t level_blocks(std::uint32_t l) const {
    return static_cast<std::uint32_t>(cfg_.n / pow_b_[l] / cfg_.block_size);
  }
  std::uint32_t fine_blocks() const { return level_blocks(0); }
  // Reweighting factor W(l) = B^l as a real.
  real weight(std::uint32_t l) const {
    return static_cast<real>(pow_b_[l]);
  }

 private:
  friend ValidatedConfig validate_config(const LLSAConfig& cfg);
  LLSAConfig cfg_;
  real scale_ = real(0);
  std::vector<std::uint64_t> pow_b_;  // pow_b_[l] = B^l, l in [0, levels+1]
};

// Total: every config either validates or raises exactly one typed error.
//   ConfigError       n, d, block_size, or softmax_scale malformed; or the
//                     sequence length exceeds the 32-bit index range.
//   LevelError        levels outside [1, max_levels] or enrich_levels > levels.
//   DivisibilityError n not a multiple of B^levels.
//   TopKError         top_k outside [1, n / B^levels] (the per-row candidate
//                     count of the coarsest selection stage).
ValidatedConfig validate_config(const LLSAConfig& cfg);

// Number of (level, block) entries in one fine query block's enriched KV set:
// K per enriched level below the coarsest, plus the full coarsest block list
// when enrichment reaches level L.
std::uint32_t effective_block_count(const ValidatedConfig& cfg);

}  // namespace llsa
