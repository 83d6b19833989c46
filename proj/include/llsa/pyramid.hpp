// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "llsa/types.hpp"

namespace llsa {

// Mean-pooling hierarchy. levels[0] is the input; levels[l][t] is the mean of
// the B rows levels[l-1][t*B .. t*B+B-1].
struct Pyramid {
  std::vector<FeatureMatrix> levels;

  const FeatureMatrix& level(std::uint32_t l) const { return levels[l]; }
  std::uint32_t depth() const {
    return static_cast<std::uint32_t>(levels.size()) - 1;
  }
};

// Builds levels 0..levels. Throws DivisibilityError if any level's row count
// is not a multiple of block_size. The B-term sums run sequentially in index
// order within each output row (parallelism is across rows only), so results
// are identical for every thread count.
Pyramid build_pyramid(const FeatureMatrix& x, std::uint32_t block_size,
                      std::uint32_t levels);

// Adjoint of `hops` consecutive mean-pooling steps: every fine row t receives
// d_coarse[t / B^hops] / B^hops. hops = 0 returns the input unchanged.
FeatureMatrix pool_backward(const FeatureMatrix& d_coarse,
                            std::uint32_t block_size, std::uint32_t hops);

}  // namespace llsa
