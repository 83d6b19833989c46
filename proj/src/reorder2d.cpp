// SPDX-License-Identifier: Apache-2.0
#include "llsa/reorder2d.hpp"

#include <string>

#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

Permutation build_reorder(std::uint32_t height, std::uint32_t width,
                          std::uint32_t block_size) {
  if (height == 0 || width == 0) {
    throw DivisibilityError("image dimensions must be positive");
  }
  std::uint32_t side = 0;
  while (side * side < block_size) ++side;
  if (side * side != block_size || block_size == 0) {
    throw NotSquareBlock("block size " + std::to_string(block_size) +
                         " is not a perfect square");
  }

  // Patch depth: largest m with side^m | height and side^m | width.
  std::uint32_t depth = 0;
  std::uint64_t patch = 1;
  while (height % (patch * side) == 0 && width % (patch * side) == 0) {
    patch *= side;
    ++depth;
  }
  if (depth == 0 && !(height == 1 && width == 1)) {
    throw DivisibilityError("side " + std::to_string(side) +
                            " divides neither " + std::to_string(height) +
                            " nor " + std::to_string(width) + " evenly");
  }
  // patch = side^depth, the top-level patch edge.

  Permutation p;
  p.size = height * width;
  p.forward.resize(p.size);
  p.inverse.resize(p.size);

  const std::uint64_t per_patch = patch * patch;  // B^depth
  const std::uint32_t grid_w = width / static_cast<std::uint32_t>(patch);

  parallel_for(p.size, [&](std::size_t begin, std::size_t end) {
    for (std::size_t pos = begin; pos < end; ++pos) {
      // Whole patches are laid out row-major across the image...
      const std::uint64_t patch_id = pos / per_patch;
      std::uint64_t within = pos % per_patch;
      std::uint64_t y = (patch_id / grid_w) * patch;
      std::uint64_t x = (patch_id % grid_w) * patch;
      // ...and each base-B digit of the within-patch offset picks one of the
      // s x s sub-patches, again row-major, from coarse to fine.
      std::uint64_t sub = patch / side;
      while (sub >= 1 && within > 0) {
        const std::uint64_t digit = within / (sub * sub);
        y += (digit / side) * sub;
        x += (digit % side) * sub;
        within %= sub * sub;
        if (sub == 1) break;
        sub /= side;
      }
      p.forward[pos] = static_cast<std::uint32_t>(y * width + x);
    }
  });
  for (std::uint32_t pos = 0; pos < p.size; ++pos) {
    p.inverse[p.forward[pos]] = pos;
  }
  return p;
}

FeatureMatrix apply_permutation(const FeatureMatrix& x, const Permutation& p,
                                PermDirection direction) {
  if (x.rows() != p.size) {
    throw ShapeMismatch("matrix has " + std::to_string(x.rows()) +
                        " rows, permutation covers " + std::to_string(p.size));
  }
  const std::vector<std::uint32_t>& map =
      direction == PermDirection::Forward ? p.forward : p.inverse;
  FeatureMatrix out(x.rows(), x.cols());
  const std::size_t d = x.cols();
  parallel_for(x.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const real* src = x.row(map[i]);
      real* dst = out.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
  });
  return out;
}

}  // namespace llsa
