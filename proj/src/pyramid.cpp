// SPDX-License-Identifier: Apache-2.0
#include "llsa/pyramid.hpp"

#include <string>

#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

Pyramid build_pyramid(const FeatureMatrix& x, std::uint32_t block_size,
                      std::uint32_t levels) {
  if (block_size < 2) {
    throw DivisibilityError("block size must be at least 2");
  }
  Pyramid pyr;
  pyr.levels.reserve(levels + 1);
  pyr.levels.push_back(x);
  const std::size_t d = x.cols();
  for (std::uint32_t l = 1; l <= levels; ++l) {
    const FeatureMatrix& prev = pyr.levels.back();
    if (prev.rows() % block_size != 0) {
      throw DivisibilityError("level " + std::to_string(l - 1) + " has " +
                              std::to_string(prev.rows()) +
                              " rows, not a multiple of block size " +
                              std::to_string(block_size));
    }
    FeatureMatrix coarse(prev.rows() / block_size, d);
    const real inv_b = real(1) / real(block_size);
    parallel_for(coarse.rows(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t) {
        real* out = coarse.row(t);
        for (std::uint32_t b = 0; b < block_size; ++b) {
          const real* in = prev.row(t * block_size + b);
          for (std::size_t j = 0; j < d; ++j) out[j] += in[j];
        }
        for (std::size_t j = 0; j < d; ++j) out[j] *= inv_b;
      }
    });
    pyr.levels.push_back(std::move(coarse));
  }
  return pyr;
}

FeatureMatrix pool_backward(const FeatureMatrix& d_coarse,
                            std::uint32_t block_size, std::uint32_t hops) {
  if (hops == 0) return d_coarse;
  if (block_size < 2) {
    throw DivisibilityError("block size must be at least 2");
  }
  std::size_t group = 1;
  for (std::uint32_t h = 0; h < hops; ++h) group *= block_size;
  FeatureMatrix fine(d_coarse.rows() * group, d_coarse.cols());
  const real inv = real(1) / static_cast<real>(group);
  const std::size_t d = fine.cols();
  parallel_for(fine.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const real* src = d_coarse.row(t / group);
      real* dst = fine.row(t);
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] * inv;
    }
  });
  return fine;
}

}  // namespace llsa
