// SPDX-License-Identifier: Apache-2.0
#include "llsa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llsa/attention.hpp"
#include "llsa/attention_grad.hpp"
#include "llsa/errors.hpp"
#include "llsa/indexmap.hpp"
#include "llsa/oracle.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/selection.hpp"
#include "llsa/tensorio.hpp"

namespace llsa::bench {

namespace {

std::uint64_t now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

// Median wall time of `reps` runs of `body` after one untimed warm-up.
template <typename F>
std::uint64_t timed_median(std::uint32_t reps, F&& body) {
  body();  // warm-up
  std::vector<std::uint64_t> samples;
  samples.reserve(reps);
  for (std::uint32_t r = 0; r < reps; ++r) {
    const std::uint64_t t0 = now_ns();
    body();
    const std::uint64_t t1 = now_ns();
    samples.push_back(t1 > t0 ? t1 - t0 : 1);
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2,
                   samples.end());
  return samples[samples.size() / 2];
}

BenchRecord make_record(const ValidatedConfig& cfg, std::string phase,
                        std::uint64_t wall_ns, std::uint64_t mul_accs,
                        std::uint64_t seed) {
  BenchRecord rec;
  rec.n = cfg.n();
  rec.phase = std::move(phase);
  rec.wall_ns = wall_ns;
  rec.mul_accs = mul_accs;
  rec.b = cfg.block_size();
  rec.k = cfg.top_k();
  rec.levels = cfg.levels();
  rec.enrich = cfg.enrich_levels();
  rec.mode = to_string(cfg.mode());
  rec.seed = seed;
  return rec;
}

double grad_max_error(const GradientSet& a, const GradientSet& b) {
  return std::max({double(max_abs_diff(a.dq, b.dq)),
                   double(max_abs_diff(a.dk, b.dk)),
                   double(max_abs_diff(a.dv, b.dv))});
}

// Sorted (query block, key block) pair list of a selection table.
std::vector<std::pair<std::uint32_t, std::uint32_t>> table_pairs(
    const LevelIndices& table) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(std::size_t(table.query_blocks) * table.k);
  for (std::uint32_t i = 0; i < table.query_blocks; ++i) {
    for (std::uint32_t b : table.row(i)) pairs.emplace_back(i, b);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> transposed_pairs(
    const TransposedIndices& t) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(t.flat_queries.size());
  for (std::uint32_t b = 0; b < t.key_blocks; ++b) {
    for (std::uint32_t i : t.segment(b)) pairs.emplace_back(i, b);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace

std::string to_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream out;
  out << "n,phase,wall_ns,mul_accs,b,k,levels,enrich,mode,seed\n";
  for (const BenchRecord& r : records) {
    out << r.n << ',' << r.phase << ',' << r.wall_ns << ',' << r.mul_accs
        << ',' << r.b << ',' << r.k << ',' << r.levels << ',' << r.enrich
        << ',' << r.mode << ',' << r.seed << '\n';
  }
  return out.str();
}

std::string to_json(const std::vector<BenchRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const BenchRecord& r : records) {
    arr.push_back({{"n", r.n},
                   {"phase", r.phase},
                   {"wall_ns", r.wall_ns},
                   {"mul_accs", r.mul_accs},
                   {"b", r.b},
                   {"k", r.k},
                   {"levels", r.levels},
                   {"enrich", r.enrich},
                   {"mode", r.mode},
                   {"seed", r.seed}});
  }
  return arr.dump(2);
}

double fit_loglog_slope(
    const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) {
    throw ConfigError("slope fit needs at least two points");
  }
  double sx = 0, sy = 0;
  std::vector<std::pair<double, double>> logs;
  logs.reserve(points.size());
  for (const auto& [x, y] : points) {
    if (!(x > 0) || !(y > 0)) {
      throw ConfigError("slope fit needs strictly positive coordinates");
    }
    logs.emplace_back(std::log(x), std::log(y));
    sx += logs.back().first;
    sy += logs.back().second;
  }
  const double mx = sx / double(logs.size());
  const double my = sy / double(logs.size());
  double num = 0, den = 0;
  for (const auto& [lx, ly] : logs) {
    num += (lx - mx) * (ly - my);
    den += (lx - mx) * (lx - mx);
  }
  return num / den;
}

std::vector<VerifyCheck> run_verify(const VerifyOptions& opt) {
  std::vector<VerifyCheck> checks;
  const double tol = double(kVerifyTolerance);
  auto add = [&checks](std::string name, double error, double tolerance) {
    checks.push_back(
        {std::move(name), error, tolerance, error <= tolerance});
  };

  LLSAConfig base = opt.config;
  (void)validate_config(base);  // fail early, before any allocation

  FeatureMatrix q = opt.q ? *opt.q : gen_random(base.n, base.d, opt.seed);
  FeatureMatrix k = opt.k ? *opt.k : gen_random(base.n, base.d, opt.seed + 1);
  FeatureMatrix v = opt.v ? *opt.v : gen_random(base.n, base.d, opt.seed + 2);
  if (q.rows() != base.n || q.cols() != base.d || !q.same_shape(k) ||
      !q.same_shape(v)) {
    throw ShapeMismatch("verify inputs must be " + std::to_string(base.n) +
                        " x " + std::to_string(base.d));
  }
  const FeatureMatrix d_out = gen_random(base.n, base.d, opt.seed + 3);
  bool dumped = false;

  for (ReweightMode mode : {ReweightMode::ScaleKV, ReweightMode::LogitBias}) {
    base.reweight_mode = mode;
    const ValidatedConfig cfg = validate_config(base);
    const Pyramid pq = build_pyramid(q, cfg.block_size(), cfg.levels());
    const Pyramid pk = build_pyramid(k, cfg.block_size(), cfg.levels());
    const Pyramid pv = build_pyramid(v, cfg.block_size(), cfg.levels());
    const SelectionResult sel = hierarchical_topk(pq, pk, cfg);
    if (opt.dump_selection_to && !dumped) {
      dump_selection(sel, *opt.dump_selection_to);
      dumped = true;
    }
    const EnrichedKVPlan plan = build_plan(sel, cfg);
    const ForwardState fwd = llsa_forward(q, k, v, pk, pv, plan, cfg);
    const FeatureMatrix ref =
        oracle::effective_attention(q, k, v, pk, pv, plan, cfg);
    add(std::string("forward-oracle-") + to_string(mode),
        double(max_abs_diff(fwd.output, ref)), tol);

    const std::vector<TransposedIndices> transposed = transpose_all(sel, cfg);
    const GradientSet grads = llsa_backward(d_out, fwd, q, k, v, pk, pv, plan,
                                            transposed, cfg);
    const GradientSet ref_grads =
        oracle::mask_backward(d_out, q, k, v, pk, pv, sel, cfg);
    add(std::string("backward-mask-") + to_string(mode),
        grad_max_error(grads, ref_grads), tol);

    if (mode == ReweightMode::ScaleKV) {
      // Transpose checks on the same selection tables.
      bool mask_equal = true;
      bool roundtrip = true;
      for (std::uint32_t l = 0; l < cfg.levels(); ++l) {
        const std::uint32_t key_blocks = cfg.level_blocks(l);
        TransposedIndices fast = transpose_indices(sel.per_level[l],
                                                   key_blocks);
        const TransposedIndices ref_t =
            oracle::mask_transpose(sel.per_level[l], key_blocks);
        mask_equal = mask_equal && fast.offsets == ref_t.offsets &&
                     fast.flat_queries == ref_t.flat_queries;
        if (opt.corrupt_roundtrip && !fast.flat_queries.empty()) {
          fast.flat_queries[0] = (fast.flat_queries[0] + 1) %
                                 sel.per_level[l].query_blocks;
        }
        roundtrip = roundtrip &&
                    transposed_pairs(fast) == table_pairs(sel.per_level[l]);
      }
      add("transpose-mask-equivalence", mask_equal ? 0.0 : 1.0, 0.5);
      add("transpose-roundtrip", roundtrip ? 0.0 : 1.0, 0.5);
    }
  }

  // Degenerate single-level config whose selection keeps every candidate:
  // the sparse forward must reproduce plain dense attention.
  {
    LLSAConfig dense = base;
    dense.reweight_mode = ReweightMode::ScaleKV;
    dense.levels = 1;
    dense.enrich_levels = 0;
    dense.top_k = static_cast<std::uint32_t>(dense.n / dense.block_size);
    const ValidatedConfig cfg = validate_config(dense);
    const Pyramid pq = build_pyramid(q, cfg.block_size(), cfg.levels());
    const Pyramid pk = build_pyramid(k, cfg.block_size(), cfg.levels());
    const Pyramid pv = build_pyramid(v, cfg.block_size(), cfg.levels());
    const SelectionResult sel = hierarchical_topk(pq, pk, cfg);
    const EnrichedKVPlan plan = build_plan(sel, cfg);
    const ForwardState fwd = llsa_forward(q, k, v, pk, pv, plan, cfg);
    const FeatureMatrix ref = oracle::dense_attention(q, k, v, cfg.scale());
    add("forward-dense-reduction", double(max_abs_diff(fwd.output, ref)),
        tol);
  }

  return checks;
}

ScalingReport run_scaling(const ScalingOptions& opt) {
  ScalingReport report;
  const std::uint32_t reps = std::max<std::uint32_t>(1, opt.reps);

  std::vector<std::pair<double, double>> total_points;
  std::vector<std::vector<std::pair<double, double>>> phase_points(5);
  const char* phase_names[5] = {"select", "forward", "backward_kv",
                                "backward_full", "dense_oracle"};

  for (std::uint64_t n : opt.n_grid) {
    LLSAConfig raw;
    raw.n = n;
    raw.d = opt.d;
    raw.block_size = opt.block_size;
    raw.top_k = opt.top_k;
    raw.levels =
        opt.levels ? opt.levels : max_levels(n, opt.block_size);
    raw.enrich_levels = opt.full_enrich ? raw.levels : opt.enrich;
    raw.reweight_mode = opt.mode;
    const ValidatedConfig cfg = validate_config(raw);

    const FeatureMatrix q = gen_random(n, opt.d, opt.seed);
    const FeatureMatrix k = gen_random(n, opt.d, opt.seed + 1);
    const FeatureMatrix v = gen_random(n, opt.d, opt.seed + 2);
    const FeatureMatrix d_out = gen_random(n, opt.d, opt.seed + 3);
    const Pyramid pq = build_pyramid(q, cfg.block_size(), cfg.levels());
    const Pyramid pk = build_pyramid(k, cfg.block_size(), cfg.levels());
    const Pyramid pv = build_pyramid(v, cfg.block_size(), cfg.levels());

    SelectionResult sel;
    const std::uint64_t t_select =
        timed_median(reps, [&] { sel = hierarchical_topk(pq, pk, cfg); });
    report.records.push_back(
        make_record(cfg, "select", t_select, sel.mul_accs, opt.seed));
    phase_points[0].emplace_back(double(n), double(t_select));

    EnrichedKVPlan plan;
    ForwardState fwd;
    const std::uint64_t t_forward = timed_median(reps, [&] {
      plan = build_plan(sel, cfg);
      fwd = llsa_forward(q, k, v, pk, pv, plan, cfg);
    });
    report.records.push_back(
        make_record(cfg, "forward", t_forward, fwd.mul_accs, opt.seed));
    phase_points[1].emplace_back(double(n), double(t_forward));

    std::vector<TransposedIndices> transposed;
    FeatureMatrix dk, dv;
    std::uint64_t kv_macs = 0;
    const std::uint64_t t_kv = timed_median(reps, [&] {
      transposed = transpose_all(sel, cfg);
      kv_macs = 0;
      kv_backward(d_out, fwd, q, pk, pv, transposed, cfg, dk, dv, &kv_macs);
    });
    report.records.push_back(
        make_record(cfg, "backward_kv", t_kv, kv_macs, opt.seed));
    phase_points[2].emplace_back(double(n), double(t_kv));

    std::uint64_t full_macs = 0;
    const std::uint64_t t_full = timed_median(reps, [&] {
      transposed = transpose_all(sel, cfg);
      full_macs = 0;
      (void)llsa_backward(d_out, fwd, q, k, v, pk, pv, plan, transposed, cfg,
                          &full_macs);
    });
    report.records.push_back(
        make_record(cfg, "backward_full", t_full, full_macs, opt.seed));
    phase_points[3].emplace_back(double(n), double(t_full));

    if (opt.time_dense && n <= opt.dense_cap) {
      FeatureMatrix dense;
      const std::uint64_t t_dense = timed_median(reps, [&] {
        dense = oracle::dense_attention(q, k, v, cfg.scale());
      });
      report.records.push_back(make_record(cfg, "dense_oracle", t_dense,
                                           n * n * opt.d, opt.seed));
      phase_points[4].emplace_back(double(n), double(t_dense));
    }

    const double total = double(t_select) + double(t_forward) +
                         double(t_full);
    total_points.emplace_back(double(n), total);
  }

  for (std::size_t p = 0; p < 5; ++p) {
    if (phase_points[p].size() >= 2) {
      report.slopes.push_back(
          {phase_names[p], fit_loglog_slope(phase_points[p])});
    }
  }
  if (total_points.size() >= 2) {
    report.total_slope = fit_loglog_slope(total_points);
    double lo = 0, hi = 0;
    for (const auto& [n, t] : total_points) {
      const double norm = t / (n * std::log2(n));
      lo = (lo == 0) ? norm : std::min(lo, norm);
      hi = std::max(hi, norm);
    }
    report.total_nlogn_spread = hi / lo;
  }
  return report;
}

KvBenchReport run_kv_backward_bench(const KvBenchOptions& opt) {
  KvBenchReport report;
  const std::uint32_t reps = std::max<std::uint32_t>(1, opt.reps);

  for (std::uint64_t n : opt.n_grid) {
    LLSAConfig raw;
    raw.n = n;
    raw.d = opt.d;
    raw.block_size = opt.block_size;
    raw.top_k = opt.top_k;
    raw.levels = opt.levels;
    raw.enrich_levels = opt.enrich;
    raw.reweight_mode = opt.mode;
    const ValidatedConfig cfg = validate_config(raw);

    const FeatureMatrix q = gen_random(n, opt.d, opt.seed);
    const FeatureMatrix k = gen_random(n, opt.d, opt.seed + 1);
    const FeatureMatrix v = gen_random(n, opt.d, opt.seed + 2);
    const FeatureMatrix d_out = gen_random(n, opt.d, opt.seed + 3);
    const Pyramid pq = build_pyramid(q, cfg.block_size(), cfg.levels());
    const Pyramid pk = build_pyramid(k, cfg.block_size(), cfg.levels());
    const Pyramid pv = build_pyramid(v, cfg.block_size(), cfg.levels());
    const SelectionResult sel = hierarchical_topk(pq, pk, cfg);
    const EnrichedKVPlan plan = build_plan(sel, cfg);
    const ForwardState fwd = llsa_forward(q, k, v, pk, pv, plan, cfg);

    std::vector<TransposedIndices> transposed;
    FeatureMatrix dk, dv;
    std::uint64_t kv_macs = 0;
    const std::uint64_t t_csc = timed_median(reps, [&] {
      transposed = transpose_all(sel, cfg);
      kv_macs = 0;
      kv_backward(d_out, fwd, q, pk, pv, transposed, cfg, dk, dv, &kv_macs);
    });
    report.records.push_back(
        make_record(cfg, "backward_kv", t_csc, kv_macs, opt.seed));
    report.per_token_ns.push_back(double(t_csc) / double(n));

    if (opt.mask_baseline) {
      FeatureMatrix mk, mv;
      const std::uint64_t t_mask = timed_median(reps, [&] {
        oracle::mask_kv_backward(d_out, fwd, q, pk, pv, sel, cfg, mk, mv);
      });
      report.records.push_back(
          make_record(cfg, "backward_kv_mask", t_mask, kv_macs, opt.seed));
      report.baseline_per_token_ns.push_back(double(t_mask) / double(n));
      report.max_error =
          std::max({report.max_error, double(max_abs_diff(dk, mk)),
                    double(max_abs_diff(dv, mv))});
    }
  }

  if (!report.per_token_ns.empty()) {
    const auto [lo, hi] = std::minmax_element(report.per_token_ns.begin(),
                                              report.per_token_ns.end());
    report.flatness = *hi / *lo;
  }
  report.baseline_monotone = report.baseline_per_token_ns.size() >= 2;
  for (std::size_t i = 1; i < report.baseline_per_token_ns.size(); ++i) {
    report.baseline_monotone =
        report.baseline_monotone &&
        report.baseline_per_token_ns[i] > report.baseline_per_token_ns[i - 1];
  }
  return report;
}

GradCheckSummary run_gradcheck(const GradCheckOptions& opt) {
  const ValidatedConfig cfg = validate_config(opt.config);
  const FeatureMatrix q =
      opt.q ? *opt.q : gen_random(cfg.n(), cfg.d(), opt.seed);
  const FeatureMatrix k =
      opt.k ? *opt.k : gen_random(cfg.n(), cfg.d(), opt.seed + 1);
  const FeatureMatrix v =
      opt.v ? *opt.v : gen_random(cfg.n(), cfg.d(), opt.seed + 2);
  const FeatureMatrix g = gen_random(cfg.n(), cfg.d(), opt.seed + 3);

  const oracle::GradCheckReport rep = oracle::finite_diff_check(
      q, k, v, g, cfg, opt.step, opt.max_coords, opt.seed + 4);
  GradCheckSummary out;
  out.max_rel_error = double(rep.max_rel_error);
  out.worst_matrix = rep.worst_matrix;
  out.worst_row = rep.worst_row;
  out.worst_col = rep.worst_col;
  out.coords_checked = rep.coords_checked;
  return out;
}

}  // namespace llsa::bench
