// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "llsa/config.hpp"
#include "llsa/types.hpp"

// Measurement harness behind the CLI: oracle-equivalence verification,
// scaling sweeps with log-log slope fits, and the key/value backward
// throughput comparison against the dense-mask baseline. Timings use the
// monotonic clock, median of `reps` runs after one warm-up; multiply-
// accumulate counters are deterministic and reproduce exactly across reruns
// with the same seed.
namespace llsa::bench {

// One timed measurement. `phase` is one of: select, forward, backward_kv,
// backward_full, dense_oracle, backward_kv_mask (the mask baseline of the
// kv-backward comparison). The config echo makes every row self-describing.
struct BenchRecord {
  std::uint64_t n = 0;
  std::string phase;
  std::uint64_t wall_ns = 0;
  std::uint64_t mul_accs = 0;
  std::uint32_t b = 0;
  std::uint32_t k = 0;
  std::uint32_t levels = 0;
  std::uint32_t enrich = 0;
  std::string mode;
  std::uint64_t seed = 0;
};

// Fixed column order: n,phase,wall_ns,mul_accs,b,k,levels,enrich,mode,seed.
std::string to_csv(const std::vector<BenchRecord>& records);
// Same fields as a JSON array of objects.
std::string to_json(const std::vector<BenchRecord>& records);

// Least-squares slope of ln(y) against ln(x). Requires >= 2 points with
// strictly positive coordinates (ConfigError otherwise).
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

// ---------------------------------------------------------------------------
// verify: fast-path vs oracle agreement on seeded instances.

// Max-abs-diff tolerance for the oracle equivalence checks; relaxed in
// single-precision builds.
inline constexpr real kVerifyTolerance =
    sizeof(real) == sizeof(double) ? real(1e-10) : real(1e-4);

struct VerifyCheck {
  std::string name;
  double error = 0;      // max abs diff (1.0 for failed exact checks)
  double tolerance = 0;  // 0.5 for exact (pass/fail) checks
  bool pass = false;
};

struct VerifyOptions {
  // Instance the suite runs on. Sizes must stay within the oracle cap; the
  // reweighting mode is ignored (both modes are always checked).
  LLSAConfig config{256, 16, 4, 2, 2, 2};
  std::uint64_t seed = 42;
  // Negative control: corrupts one transposed entry so the
  // "transpose-roundtrip" check must fail.
  bool corrupt_roundtrip = false;
  // Optional replacement inputs; when set, all three must be n x d.
  const FeatureMatrix* q = nullptr;
  const FeatureMatrix* k = nullptr;
  const FeatureMatrix* v = nullptr;
  // When set, receives the selection-table dump of the first instance.
  std::ostream* dump_selection_to = nullptr;
};

// Runs every equivalence check and returns one entry per check:
//   forward-oracle-scalekv, forward-oracle-logitbias, forward-dense-reduction,
//   transpose-mask-equivalence, transpose-roundtrip,
//   backward-mask-scalekv, backward-mask-logitbias.
std::vector<VerifyCheck> run_verify(const VerifyOptions& opt = {});

// ---------------------------------------------------------------------------
// scaling: wall time and work counters across a sequence-length grid.

struct ScalingOptions {
  std::vector<std::uint64_t> n_grid = {8192, 16384, 32768, 65536};
  std::uint32_t d = 16;
  std::uint32_t block_size = 16;
  std::uint32_t top_k = 8;
  std::uint32_t levels = 0;    // 0 = deepest admissible per n
  bool full_enrich = true;     // enrich_levels = levels
  std::uint32_t enrich = 0;    // used when full_enrich is false
  ReweightMode mode = ReweightMode::ScaleKV;
  std::uint64_t seed = 42;
  std::uint32_t reps = 5;      // median of reps, one extra warm-up run
  bool time_dense = true;      // quadratic reference on small grid points
  std::uint64_t dense_cap = 2048;
};

struct PhaseSlope {
  std::string phase;
  double slope = 0;
};

struct ScalingReport {
  std::vector<BenchRecord> records;
  std::vector<PhaseSlope> slopes;  // one per phase with >= 2 grid points
  // Slope of select + forward + backward_full wall time, and the spread
  // (max/min) of that total divided by n*log2(n) across the grid.
  double total_slope = 0;
  double total_nlogn_spread = 0;
};

ScalingReport run_scaling(const ScalingOptions& opt = {});

// ---------------------------------------------------------------------------
// kv-backward: CSC-driven backward vs the dense-mask baseline.

struct KvBenchOptions {
  std::vector<std::uint64_t> n_grid = {8192, 16384, 32768, 65536};
  // Small feature dim and blocks on purpose: the comparison isolates index
  // machinery (CSC walk vs mask build + column scan), not GEMM throughput.
  std::uint32_t d = 4;
  std::uint32_t block_size = 8;
  std::uint32_t top_k = 8;
  std::uint32_t levels = 1;
  std::uint32_t enrich = 0;
  ReweightMode mode = ReweightMode::ScaleKV;
  std::uint64_t seed = 42;
  std::uint32_t reps = 5;
  bool mask_baseline = true;
};

struct KvBenchReport {
  std::vector<BenchRecord> records;  // backward_kv and backward_kv_mask rows
  std::vector<double> per_token_ns;           // CSC path, one per grid point
  std::vector<double> baseline_per_token_ns;  // mask baseline (if enabled)
  double flatness = 0;           // max/min of per_token_ns
  bool baseline_monotone = false;  // baseline per-token time strictly grows
  double max_error = 0;  // dk/dv disagreement between the two paths
};

KvBenchReport run_kv_backward_bench(const KvBenchOptions& opt = {});

// ---------------------------------------------------------------------------
// gradcheck plumbing shared by the CLI and tests: builds the config, draws
// seeded inputs, and runs the finite-difference harness.

struct GradCheckOptions {
  LLSAConfig config{128, 8, 4, 2, 2, 2};
  std::uint64_t seed = 42;
  real step = real(1e-6);
  std::size_t max_coords = 0;  // 0 = every coordinate
  const FeatureMatrix* q = nullptr;
  const FeatureMatrix* k = nullptr;
  const FeatureMatrix* v = nullptr;
};

struct GradCheckSummary {
  double max_rel_error = 0;
  char worst_matrix = '?';
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  std::size_t coords_checked = 0;
};

GradCheckSummary run_gradcheck(const GradCheckOptions& opt = {});

}  // namespace llsa::bench
