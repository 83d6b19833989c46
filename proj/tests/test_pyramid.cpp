// SPDX-License-Identifier: Apache-2.0
#include <cstdint>
#include <vector>

#include <doctest.h>

#include "llsa/errors.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/tensorio.hpp"
#include "llsa/types.hpp"

using namespace llsa;

namespace {

FeatureMatrix column(std::vector<real> values) {
  const std::size_t rows = values.size();
  return FeatureMatrix::from_values(rows, 1, std::move(values));
}

}  // namespace

TEST_CASE("mean pooling halves [[1],[3],[5],[7]] into [[2],[6]]") {
  const Pyramid p = build_pyramid(column({1, 3, 5, 7}), 2, 1);
  REQUIRE(p.depth() == 1);
  REQUIRE(p.level(1).rows() == 2);
  CHECK(p.level(1).at(0, 0) == real(2));
  CHECK(p.level(1).at(1, 0) == real(6));
  // Level 0 is the input itself.
  CHECK(max_abs_diff(p.level(0), column({1, 3, 5, 7})) == real(0));
}

TEST_CASE("a ramp pooled by 4 yields block means") {
  const Pyramid p = build_pyramid(column({0, 1, 2, 3, 4, 5, 6, 7}), 4, 1);
  CHECK(p.level(1).at(0, 0) == real(1.5));
  CHECK(p.level(1).at(1, 0) == real(5.5));
}

TEST_CASE("two pooling levels compose") {
  std::vector<real> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = real(i);
  const Pyramid p = build_pyramid(column(std::move(v)), 2, 2);
  REQUIRE(p.depth() == 2);
  // Level 2 token t is the mean of fine tokens [4t, 4t+4).
  CHECK(p.level(2).rows() == 4);
  CHECK(p.level(2).at(0, 0) == real(1.5));
  CHECK(p.level(2).at(3, 0) == real(13.5));
}

TEST_CASE("pooling matches an independent per-level reference") {
  const FeatureMatrix x = gen_random(64, 5, 31337);
  const Pyramid p = build_pyramid(x, 4, 2);
  for (std::uint32_t l = 1; l <= 2; ++l) {
    const FeatureMatrix& fine = p.level(l - 1);
    const FeatureMatrix& coarse = p.level(l);
    REQUIRE(coarse.rows() == fine.rows() / 4);
    for (std::size_t t = 0; t < coarse.rows(); ++t) {
      for (std::size_t c = 0; c < coarse.cols(); ++c) {
        real mean = real(0);
        for (std::size_t b = 0; b < 4; ++b) mean += fine.at(4 * t + b, c);
        mean /= real(4);
        CHECK(coarse.at(t, c) == doctest::Approx(mean).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("column sums are preserved at every level") {
  // Each level-l token is the mean of B^l fine tokens, so the level-l column
  // sum times B^l equals the fine column sum.
  const FeatureMatrix x = gen_random(81, 3, 7);
  const Pyramid p = build_pyramid(x, 3, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    real base = real(0);
    for (std::size_t t = 0; t < 81; ++t) base += x.at(t, c);
    real group = real(1);
    for (std::uint32_t l = 1; l <= 3; ++l) {
      group *= real(3);
      real sum = real(0);
      for (std::size_t t = 0; t < p.level(l).rows(); ++t) {
        sum += p.level(l).at(t, c);
      }
      CHECK(sum * group == doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("pooling rejects non-divisible row counts") {
  CHECK_THROWS_AS(build_pyramid(column({1, 2, 3}), 2, 1), DivisibilityError);
  // First level fits, second does not: 6 -> 3 -> x.
  CHECK_THROWS_AS(build_pyramid(column({1, 2, 3, 4, 5, 6}), 2, 2),
                  DivisibilityError);
}

TEST_CASE("pool_backward distributes gradients evenly") {
  SUBCASE("zero hops is the identity") {
    const FeatureMatrix g = gen_random(8, 2, 3);
    CHECK(max_abs_diff(pool_backward(g, 2, 0), g) == real(0));
  }
  SUBCASE("one hop halves and repeats") {
    const FeatureMatrix out = pool_backward(column({6}), 2, 1);
    REQUIRE(out.rows() == 2);
    CHECK(out.at(0, 0) == real(3));
    CHECK(out.at(1, 0) == real(3));
  }
  SUBCASE("two hops quarter and repeat") {
    const FeatureMatrix out = pool_backward(column({4}), 2, 2);
    REQUIRE(out.rows() == 4);
    for (std::size_t t = 0; t < 4; ++t) CHECK(out.at(t, 0) == real(1));
  }
}

TEST_CASE("pool_backward is the adjoint of pooling") {
  // <pool(x), y> == <x, pool_backward(y)> for every hop count.
  const FeatureMatrix x = gen_random(64, 4, 11);
  const Pyramid p = build_pyramid(x, 4, 2);
  for (std::uint32_t hops = 1; hops <= 2; ++hops) {
    const FeatureMatrix y =
        gen_random(p.level(hops).rows(), 4, 100 + hops);
    const FeatureMatrix yt = pool_backward(y, 4, hops);

    real lhs = real(0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      lhs += p.level(hops).data()[i] * y.data()[i];
    }
    real rhs = real(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      rhs += x.data()[i] * yt.data()[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("scaling by B^hops before the adjoint recovers a plain broadcast") {
  // The pooling adjoint divides by B^hops; a gradient already carrying that
  // factor (the coarse-level KV weight) comes out as an exact copy. B is a
  // power of two so the scale/unscale round trip is exact in floating point.
  const FeatureMatrix g = gen_random(4, 3, 5);
  FeatureMatrix scaled = g;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled.data()[i] *= real(16);
  }
  const FeatureMatrix out = pool_backward(scaled, 4, 2);
  REQUIRE(out.rows() == 64);
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(out.at(t, c) == g.at(t / 16, c));
    }
  }
}
