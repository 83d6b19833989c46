// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "llsa/types.hpp"

namespace llsa::detail {

// Dot product with four independent accumulators. The association is fixed by
// the code, so results are bitwise reproducible across runs and thread counts
// while still letting the compiler keep several FMA chains in flight.
inline real dot(const real* a, const real* b, std::size_t n) {
  real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// out += scale * v
inline void axpy(real* out, const real* v, real scale, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += scale * v[i];
}

}  // namespace llsa::detail
