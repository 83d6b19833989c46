// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace llsa {

// Element precision is a build-wide switch; everything downstream inherits it.
#if defined(LLSA_SINGLE_PRECISION)
using real = float;
#else
using real = double;
#endif

// Dense row-major matrix of `real`. Rows are feature vectors (tokens).
// Internally constructed matrices may hold any values; matrices built from
// external bytes or containers go through from_values(), which rejects
// non-finite elements.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, real(0)) {}

  // Validating constructor for externally supplied data.
  // Throws ShapeMismatch if the buffer size disagrees with rows*cols and
  // NonFiniteError if any element is NaN or infinite.
  static FeatureMatrix from_values(std::size_t rows, std::size_t cols,
                                   std::vector<real> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  real* row(std::size_t i) { return values_.data() + i * cols_; }
  const real* row(std::size_t i) const { return values_.data() + i * cols_; }

  real& at(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  real at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  real* data() { return values_.data(); }
  const real* data() const { return values_.data(); }
  std::span<const real> values() const { return values_; }

  bool same_shape(const FeatureMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<real> values_;
};

// Largest absolute elementwise difference; matrices must share a shape.
real max_abs_diff(const FeatureMatrix& a, const FeatureMatrix& b);

}  // namespace llsa
