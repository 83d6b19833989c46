// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "llsa/types.hpp"

namespace llsa {

// On-disk tensor layout (all integers little-endian):
//
//   offset  size  field
//        0     4  magic "FMAT"
//        4     4  version, u32, currently 1
//        8     4  dtype, u32: 0 = float32, 1 = float64
//       12     8  rows, u64
//       20     8  cols, u64
//       28     -  payload, rows*cols elements, row-major
//
// A 2x3 float64 tensor is therefore a 76-byte file.
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 0;
inline constexpr std::uint32_t kDtypeF64 = 1;
inline constexpr std::size_t kTensorHeaderBytes = 28;

// Writes in the element width of this build. Throws IoError on I/O failure.
void write_tensor(const std::string& path, const FeatureMatrix& m);

// Validates magic, version, dtype, and payload length (FormatError), then
// loads the payload, converting between f32 and f64 if the file width differs
// from the build width. Non-finite payloads raise NonFiniteError; unreadable
// files raise IoError.
FeatureMatrix read_tensor(const std::string& path);

enum class Distribution { StdNormal, Uniform01 };

// Deterministic, platform-independent pseudo-random matrix: the stream is
// xoshiro256++ seeded from splitmix64(seed), uniforms take the top 53 bits,
// and StdNormal applies the Box-Muller transform to uniform pairs. The same
// (rows, cols, seed, dist) always yields the same values.
FeatureMatrix gen_random(std::size_t rows, std::size_t cols,
                         std::uint64_t seed,
                         Distribution dist = Distribution::StdNormal);

}  // namespace llsa
