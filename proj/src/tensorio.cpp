// SPDX-License-Identifier: Apache-2.0
#include "llsa/tensorio.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include "llsa/errors.hpp"

namespace llsa {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

template <typename Float>
void put_float(std::string& out, Float v) {
  if constexpr (sizeof(Float) == 4) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  } else {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

float get_f32(const unsigned char* p) {
  return std::bit_cast<float>(get_u32(p));
}

double get_f64(const unsigned char* p) {
  return std::bit_cast<double>(get_u64(p));
}

constexpr std::uint32_t build_dtype() {
  return sizeof(real) == 4 ? kDtypeF32 : kDtypeF64;
}

// --- deterministic random stream ------------------------------------------
// splitmix64 expands the user seed into xoshiro256++ state; the generator and
// both output transforms are fixed so streams match across platforms.

struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

struct Xoshiro256pp {
  std::array<std::uint64_t, 4> s;

  explicit Xoshiro256pp(std::uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& word : s) word = sm.next();
  }

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53 significant bits.
  double uniform01() { return double(next() >> 11) * 0x1.0p-53; }
};

}  // namespace

void write_tensor(const std::string& path, const FeatureMatrix& m) {
  std::string bytes;
  bytes.reserve(kTensorHeaderBytes + m.size() * sizeof(real));
  bytes.append("FMAT", 4);
  put_u32(bytes, kTensorVersion);
  put_u32(bytes, build_dtype());
  put_u64(bytes, m.rows());
  put_u64(bytes, m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) put_float(bytes, m.data()[i]);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

FeatureMatrix read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);

  if (bytes.size() < kTensorHeaderBytes) {
    throw FormatError("tensor file shorter than the 28-byte header: " + path);
  }
  if (std::memcmp(bytes.data(), "FMAT", 4) != 0) {
    throw FormatError("bad magic, expected FMAT: " + path);
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version));
  }
  const std::uint32_t dtype = get_u32(bytes.data() + 8);
  if (dtype != kDtypeF32 && dtype != kDtypeF64) {
    throw FormatError("unknown dtype tag " + std::to_string(dtype));
  }
  const std::uint64_t rows = get_u64(bytes.data() + 12);
  const std::uint64_t cols = get_u64(bytes.data() + 20);
  const std::size_t elem = dtype == kDtypeF32 ? 4 : 8;
  const std::uint64_t count = rows * cols;
  if (rows != 0 && count / rows != cols) {
    throw FormatError("tensor dimensions overflow: " + path);
  }
  if (bytes.size() != kTensorHeaderBytes + count * elem) {
    throw FormatError("payload length mismatch: expected " +
                      std::to_string(count * elem) + " bytes, found " +
                      std::to_string(bytes.size() - kTensorHeaderBytes));
  }

  std::vector<real> values(count);
  const unsigned char* p = bytes.data() + kTensorHeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i, p += elem) {
    values[i] = dtype == kDtypeF32 ? static_cast<real>(get_f32(p))
                                   : static_cast<real>(get_f64(p));
  }
  return FeatureMatrix::from_values(rows, cols, std::move(values));
}

FeatureMatrix gen_random(std::size_t rows, std::size_t cols,
                         std::uint64_t seed, Distribution dist) {
  FeatureMatrix m(rows, cols);
  Xoshiro256pp rng(seed);
  real* out = m.data();
  const std::size_t count = rows * cols;
  if (dist == Distribution::Uniform01) {
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = static_cast<real>(rng.uniform01());
    }
    return m;
  }
  // Box-Muller on consecutive uniform pairs; u1 is shifted into (0, 1] so the
  // logarithm is always finite.
  for (std::size_t i = 0; i < count; i += 2) {
    const double u1 = double((rng.next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = rng.uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i] = static_cast<real>(radius * std::cos(angle));
    if (i + 1 < count) out[i + 1] = static_cast<real>(radius * std::sin(angle));
  }
  return m;
}

}  // namespace llsa
