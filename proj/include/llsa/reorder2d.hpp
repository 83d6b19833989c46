// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "llsa/types.hpp"

namespace llsa {

// Bijection between sequence positions and raster (row-major) pixel indices.
// forward[pos] is the raster index stored at sequence position pos;
// inverse[raster] is that pixel's sequence position.
struct Permutation {
  std::uint32_t size = 0;
  std::vector<std::uint32_t> forward;
  std::vector<std::uint32_t> inverse;
};

// Hierarchical curve for an H x W image with block size B = s^2: every
// aligned s^i x s^i patch occupies a contiguous run of B^i sequence
// positions, and the s^2 sub-patches of a patch are visited row-major. The
// patch depth is the largest m with s^m dividing both H and W; whole
// top-level patches are visited row-major across the image. Consequently,
// mean-pooling the reordered sequence by B corresponds exactly to s x s
// spatial pooling.
//
// Throws NotSquareBlock if B is not a perfect square and DivisibilityError
// if s divides neither dimension (no patch level exists; a 1 x 1 image is
// the trivial exception).
Permutation build_reorder(std::uint32_t height, std::uint32_t width,
                          std::uint32_t block_size);

enum class PermDirection { Forward, Inverse };

// Gathers rows: Forward reads raster-ordered rows into sequence order
// (out[pos] = x[forward[pos]]), Inverse undoes it. Applying one after the
// other restores the input exactly.
FeatureMatrix apply_permutation(const FeatureMatrix& x, const Permutation& p,
                                PermDirection direction);

}  // namespace llsa
