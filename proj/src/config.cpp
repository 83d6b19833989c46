// SPDX-License-Identifier: Apache-2.0
#include "llsa/config.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

FeatureMatrix FeatureMatrix::from_values(std::size_t rows, std::size_t cols,
                                         std::vector<real> values) {
  if (values.size() != rows * cols) {
    throw ShapeMismatch("matrix buffer holds " + std::to_string(values.size()) +
                        " values, expected " + std::to_string(rows * cols));
  }
  FeatureMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.values_ = std::move(values);
  if (!m.all_finite()) {
    throw NonFiniteError("matrix contains NaN or infinite values");
  }
  return m;
}

bool FeatureMatrix::all_finite() const {
  for (real v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

real max_abs_diff(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch("max_abs_diff: shapes differ");
  }
  real worst = real(0);
  const real* pa = a.data();
  const real* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const real diff = std::abs(pa[i] - pb[i]);
    if (diff > worst) worst = diff;
  }
  return worst;
}

const char* to_string(ReweightMode mode) {
  return mode == ReweightMode::ScaleKV ? "scalekv" : "logitbias";
}

std::uint32_t max_levels(std::uint64_t n, std::uint32_t block_size) {
  if (block_size < 2 || n == 0) return 0;
  // Largest L with B^(L+1) <= n.
  std::uint32_t l = 0;
  std::uint64_t p = block_size;  // B^(l+1)
  while (p <= n / block_size) {
    p *= block_size;
    ++l;
  }
  return l;
}

ValidatedConfig validate_config(const LLSAConfig& cfg) {
  if (cfg.n == 0) throw ConfigError("sequence length must be positive");
  if (cfg.d == 0) throw ConfigError("feature dimension must be positive");
  if (cfg.block_size < 2) throw ConfigError("block size must be at least 2");
  if (cfg.n > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("sequence length exceeds the 32-bit index range");
  }
  if (!std::isfinite(cfg.softmax_scale) || cfg.softmax_scale < real(0)) {
    throw ConfigError("softmax scale must be finite and non-negative");
  }

  const std::uint32_t lmax = max_levels(cfg.n, cfg.block_size);
  if (cfg.levels < 1 || cfg.levels > lmax) {
    throw LevelError("levels must lie in [1, " + std::to_string(lmax) +
                     "] for n=" + std::to_string(cfg.n) +
                     ", block size " + std::to_string(cfg.block_size));
  }

  std::uint64_t pow_l = 1;
  for (std::uint32_t l = 0; l < cfg.levels; ++l) pow_l *= cfg.block_size;
  if (cfg.n % pow_l != 0) {
    throw DivisibilityError("sequence length " + std::to_string(cfg.n) +
                            " is not divisible by block_size^levels = " +
                            std::to_string(pow_l));
  }

  if (cfg.enrich_levels > cfg.levels) {
    throw LevelError("enrich_levels " + std::to_string(cfg.enrich_levels) +
                     " exceeds levels " + std::to_string(cfg.levels));
  }

  // The coarsest selection stage ranks all n/B^L coarse tokens per query row,
  // so that count is the hard upper bound for K.
  const std::uint64_t coarsest_candidates = cfg.n / pow_l;
  if (cfg.top_k < 1 || cfg.top_k > coarsest_candidates) {
    throw TopKError("top_k must lie in [1, " +
                    std::to_string(coarsest_candidates) +
                    "] (coarsest-level candidate count)");
  }

  ValidatedConfig v;
  v.cfg_ = cfg;
  v.scale_ = cfg.softmax_scale > real(0)
                 ? cfg.softmax_scale
                 : real(1) / std::sqrt(static_cast<real>(cfg.d));
  v.pow_b_.resize(cfg.levels + 2);
  v.pow_b_[0] = 1;
  for (std::uint32_t l = 1; l <= cfg.levels + 1; ++l) {
    v.pow_b_[l] = v.pow_b_[l - 1] * cfg.block_size;
  }
  return v;
}

std::uint32_t effective_block_count(const ValidatedConfig& cfg) {
  const std::uint32_t le = cfg.enrich_levels();
  const std::uint32_t l = cfg.levels();
  std::uint32_t count = cfg.top_k() * std::min(le + 1, l);
  if (le == l) count += cfg.level_blocks(l);
  return count;
}

}  // namespace llsa
