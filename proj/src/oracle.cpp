// SPDX-License-Identifier: Apache-2.0
#include "llsa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

// The correctness oracles below share no kernels with the fast paths: dot
// products are plain left-to-right loops (not the blocked accumulators in
// detail/math.hpp), softmaxes are two-pass, and gradients are derived
// independently. Agreement between the two code paths is therefore evidence,
// not tautology.
namespace llsa::oracle {

namespace {

real plain_dot(const real* a, const real* b, std::size_t d) {
  real acc = real(0);
  for (std::size_t i = 0; i < d; ++i) acc += a[i] * b[i];
  return acc;
}

void check_cap(std::size_t rows, const char* what) {
  if (rows > kOracleMaxRows) {
    throw OracleCapExceeded(std::string(what) + ": " + std::to_string(rows) +
                            " rows exceed the oracle cap of " +
                            std::to_string(kOracleMaxRows));
  }
}

// Gains of one plan entry under the configured reweighting mode.
struct Gains {
  real key = real(1);
  real value = real(1);
  real bias = real(0);
};

Gains gains_for(ReweightMode mode, real weight) {
  if (mode == ReweightMode::ScaleKV) {
    return {weight, weight, real(0)};
  }
  return {real(1), real(1), std::log(weight)};
}

// The (level, block, weight) entries of fine block i, derived straight from
// the selection tables (independently of build_plan).
std::vector<PlanEntry> entries_for_block(const SelectionResult& sel,
                                         const ValidatedConfig& cfg,
                                         std::uint32_t i) {
  std::vector<PlanEntry> entries;
  const std::uint32_t table_levels =
      std::min(cfg.enrich_levels() + 1, cfg.levels());
  for (std::uint32_t l = 0; l < table_levels; ++l) {
    const LevelIndices& table = sel.per_level[l];
    const std::uint32_t row = i / static_cast<std::uint32_t>(cfg.pow_block(l));
    for (std::uint32_t b : table.row(row)) {
      entries.push_back({l, b, cfg.weight(l)});
    }
  }
  if (cfg.enrich_levels() == cfg.levels()) {
    const std::uint32_t top = cfg.levels();
    for (std::uint32_t b = 0; b < cfg.level_blocks(top); ++b) {
      entries.push_back({top, b, cfg.weight(top)});
    }
  }
  return entries;
}

}  // namespace

FeatureMatrix dense_attention(const FeatureMatrix& q, const FeatureMatrix& k,
                              const FeatureMatrix& v, real scale) {
  check_cap(q.rows(), "dense_attention queries");
  check_cap(k.rows(), "dense_attention keys");
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ShapeMismatch("dense_attention: q/k widths or k/v rows differ");
  }
  const std::size_t n = q.rows();
  const std::size_t m = k.rows();
  const std::size_t d = q.cols();
  const std::size_t dv = v.cols();

  FeatureMatrix out(n, dv);
  std::vector<real> logits(m);
  for (std::size_t i = 0; i < n; ++i) {
    real mx = -std::numeric_limits<real>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      logits[j] = scale * plain_dot(q.row(i), k.row(j), d);
      mx = std::max(mx, logits[j]);
    }
    real denom = real(0);
    real* o = out.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const real p = std::exp(logits[j] - mx);
      denom += p;
      const real* vr = v.row(j);
      for (std::size_t c = 0; c < dv; ++c) o[c] += p * vr[c];
    }
    for (std::size_t c = 0; c < dv; ++c) o[c] /= denom;
  }
  return out;
}

FeatureMatrix effective_attention(const FeatureMatrix& q,
                                  const FeatureMatrix& k,
                                  const FeatureMatrix& v, const Pyramid& pyr_k,
                                  const Pyramid& pyr_v,
                                  const EnrichedKVPlan& plan,
                                  const ValidatedConfig& cfg) {
  check_cap(q.rows(), "effective_attention queries");
  if (q.rows() != cfg.n() || q.cols() != cfg.d() || !q.same_shape(k) ||
      !q.same_shape(v)) {
    throw ShapeMismatch("effective_attention: inputs disagree with config");
  }
  const std::uint32_t block = cfg.block_size();
  const std::size_t d = cfg.d();
  const std::size_t cand = std::size_t(plan.entries_per_block) * block;

  FeatureMatrix out(q.rows(), d);
  // Densely materialized per-block KV set, weighting already applied.
  FeatureMatrix keys(cand, d);
  FeatureMatrix vals(cand, d);
  std::vector<real> biases(cand);
  std::vector<real> logits(cand);

  for (std::uint32_t i = 0; i < plan.fine_blocks; ++i) {
    std::size_t r = 0;
    for (const PlanEntry& e : plan.block(i)) {
      const Gains g = gains_for(cfg.mode(), e.weight);
      const FeatureMatrix& lk = pyr_k.level(e.level);
      const FeatureMatrix& lv = pyr_v.level(e.level);
      for (std::uint32_t b = 0; b < block; ++b, ++r) {
        const real* kr = lk.row(std::size_t(e.block) * block + b);
        const real* vr = lv.row(std::size_t(e.block) * block + b);
        for (std::size_t c = 0; c < d; ++c) {
          keys.at(r, c) = g.key * kr[c];
          vals.at(r, c) = g.value * vr[c];
        }
        biases[r] = g.bias;
      }
    }

    for (std::uint32_t t = 0; t < block; ++t) {
      const std::size_t row = std::size_t(i) * block + t;
      real mx = cfg.safe_softmax() ? -std::numeric_limits<real>::infinity()
                                   : real(0);
      for (std::size_t c = 0; c < cand; ++c) {
        logits[c] =
            cfg.scale() * plain_dot(q.row(row), keys.row(c), d) + biases[c];
        if (cfg.safe_softmax()) mx = std::max(mx, logits[c]);
      }
      real denom = real(0);
      real* o = out.row(row);
      for (std::size_t c = 0; c < cand; ++c) {
        const real p = std::exp(logits[c] - mx);
        denom += p;
        const real* vr = vals.row(c);
        for (std::size_t e = 0; e < d; ++e) o[e] += p * vr[e];
      }
      for (std::size_t e = 0; e < d; ++e) o[e] /= denom;
    }
  }
  return out;
}

TransposedIndices mask_transpose(const LevelIndices& idx,
                                 std::uint32_t key_blocks) {
  check_cap(idx.query_blocks, "mask_transpose query blocks");
  check_cap(key_blocks, "mask_transpose key blocks");

  std::vector<std::uint8_t> mask(std::size_t(idx.query_blocks) * key_blocks,
                                 0);
  for (std::uint32_t i = 0; i < idx.query_blocks; ++i) {
    for (std::uint32_t b : idx.row(i)) {
      if (b >= key_blocks) {
        throw IndexOutOfRange("mask_transpose: index " + std::to_string(b) +
                              " >= key block count " +
                              std::to_string(key_blocks));
      }
      mask[std::size_t(i) * key_blocks + b] = 1;
    }
  }

  TransposedIndices out;
  out.key_blocks = key_blocks;
  out.offsets.assign(key_blocks + 1, 0);
  out.flat_queries.reserve(std::size_t(idx.query_blocks) * idx.k);
  for (std::uint32_t b = 0; b < key_blocks; ++b) {
    for (std::uint32_t i = 0; i < idx.query_blocks; ++i) {
      if (mask[std::size_t(i) * key_blocks + b]) out.flat_queries.push_back(i);
    }
    out.offsets[b + 1] = static_cast<std::uint32_t>(out.flat_queries.size());
  }
  return out;
}

GradientSet mask_backward(const FeatureMatrix& d_out, const FeatureMatrix& q,
                          const FeatureMatrix& k, const FeatureMatrix& v,
                          const Pyramid& pyr_k, const Pyramid& pyr_v,
                          const SelectionResult& sel,
                          const ValidatedConfig& cfg) {
  check_cap(q.rows(), "mask_backward tokens");
  if (q.rows() != cfg.n() || q.cols() != cfg.d() || !q.same_shape(k) ||
      !q.same_shape(v) || !q.same_shape(d_out)) {
    throw ShapeMismatch("mask_backward: inputs disagree with config");
  }
  const std::size_t n = q.rows();
  const std::size_t d = q.cols();
  const std::uint32_t block = cfg.block_size();
  const real scale = cfg.scale();

  GradientSet g{FeatureMatrix(n, d), FeatureMatrix(n, d), FeatureMatrix(n, d)};

  // Pass 1, query-major: per-token softmax statistics (max, denominator),
  // the projection D_t = sum_c p_c * dp_c, and the full dq row.
  std::vector<real> row_max(n), row_den(n), row_d(n);
  for (std::uint32_t i = 0; i < cfg.fine_blocks(); ++i) {
    const std::vector<PlanEntry> entries = entries_for_block(sel, cfg, i);
    for (std::uint32_t t = 0; t < block; ++t) {
      const std::size_t row = std::size_t(i) * block + t;
      const real* qt = q.row(row);
      const real* gt = d_out.row(row);

      real mx = cfg.safe_softmax() ? -std::numeric_limits<real>::infinity()
                                   : real(0);
      std::vector<real> logits;
      logits.reserve(entries.size() * block);
      for (const PlanEntry& e : entries) {
        const Gains gn = gains_for(cfg.mode(), e.weight);
        const FeatureMatrix& lk = pyr_k.level(e.level);
        for (std::uint32_t b = 0; b < block; ++b) {
          const real s =
              scale * gn.key *
                  plain_dot(qt, lk.row(std::size_t(e.block) * block + b), d) +
              gn.bias;
          logits.push_back(s);
          if (cfg.safe_softmax()) mx = std::max(mx, s);
        }
      }
      real den = real(0);
      for (real s : logits) den += std::exp(s - mx);

      real dproj = real(0);
      std::size_t c = 0;
      for (const PlanEntry& e : entries) {
        const Gains gn = gains_for(cfg.mode(), e.weight);
        const FeatureMatrix& lv = pyr_v.level(e.level);
        for (std::uint32_t b = 0; b < block; ++b, ++c) {
          const real p = std::exp(logits[c] - mx) / den;
          const real dp =
              gn.value *
              plain_dot(gt, lv.row(std::size_t(e.block) * block + b), d);
          dproj += p * dp;
        }
      }

      real* dq = g.dq.row(row);
      c = 0;
      for (const PlanEntry& e : entries) {
        const Gains gn = gains_for(cfg.mode(), e.weight);
        const FeatureMatrix& lk = pyr_k.level(e.level);
        const FeatureMatrix& lv = pyr_v.level(e.level);
        for (std::uint32_t b = 0; b < block; ++b, ++c) {
          const real* kr = lk.row(std::size_t(e.block) * block + b);
          const real* vr = lv.row(std::size_t(e.block) * block + b);
          const real p = std::exp(logits[c] - mx) / den;
          const real dp = gn.value * plain_dot(gt, vr, d);
          const real ds = p * (dp - dproj);
          for (std::size_t e2 = 0; e2 < d; ++e2) {
            dq[e2] += scale * gn.key * ds * kr[e2];
          }
        }
      }

      row_max[row] = mx;
      row_den[row] = den;
      row_d[row] = dproj;
    }
  }

  // Pass 2, key-major per level: dense query-block x key-block mask, columns
  // scanned in order; level-l gradients land in a level-sized accumulator.
  const std::uint32_t table_levels =
      std::min(cfg.enrich_levels() + 1, cfg.levels());
  auto accumulate = [&](const FeatureMatrix& lk, const FeatureMatrix& lv,
                        const Gains& gn, std::size_t key_token,
                        std::size_t token, FeatureMatrix& gk,
                        FeatureMatrix& gv) {
    const real* qt = q.row(token);
    const real* gt = d_out.row(token);
    const real* kr = lk.row(key_token);
    const real* vr = lv.row(key_token);
    const real s = scale * gn.key * plain_dot(qt, kr, d) + gn.bias;
    const real p = std::exp(s - row_max[token]) / row_den[token];
    const real dp = gn.value * plain_dot(gt, vr, d);
    const real ds = p * (dp - row_d[token]);
    real* gkr = gk.row(key_token);
    real* gvr = gv.row(key_token);
    for (std::size_t e = 0; e < d; ++e) {
      gkr[e] += scale * gn.key * ds * qt[e];
      gvr[e] += p * gn.value * gt[e];
    }
  };
  auto broadcast = [&](const FeatureMatrix& src, std::uint64_t group,
                       FeatureMatrix& dst) {
    const real inv = real(1) / static_cast<real>(group);
    for (std::size_t t = 0; t < n; ++t) {
      const real* s = src.row(t / group);
      real* o = dst.row(t);
      for (std::size_t e = 0; e < d; ++e) o[e] += s[e] * inv;
    }
  };

  for (std::uint32_t l = 0; l < table_levels; ++l) {
    const LevelIndices& table = sel.per_level[l];
    const std::uint32_t tq = table.query_blocks;
    const std::uint32_t tk = cfg.level_blocks(l);
    std::vector<std::uint8_t> mask(std::size_t(tq) * tk, 0);
    for (std::uint32_t i = 0; i < tq; ++i) {
      for (std::uint32_t b : table.row(i)) {
        mask[std::size_t(i) * tk + b] = 1;
      }
    }
    const Gains gn = gains_for(cfg.mode(), cfg.weight(l));
    const std::uint64_t span = cfg.pow_block(l + 1);  // fine tokens per row
    FeatureMatrix gk(cfg.level_tokens(l), d);
    FeatureMatrix gv(cfg.level_tokens(l), d);
    for (std::uint32_t b = 0; b < tk; ++b) {
      for (std::uint32_t i = 0; i < tq; ++i) {
        if (!mask[std::size_t(i) * tk + b]) continue;
        for (std::uint64_t t = i * span; t < (i + 1) * span; ++t) {
          for (std::uint32_t bb = 0; bb < block; ++bb) {
            accumulate(pyr_k.level(l), pyr_v.level(l), gn,
                       std::size_t(b) * block + bb, t, gk, gv);
          }
        }
      }
    }
    broadcast(gk, cfg.pow_block(l), g.dk);
    broadcast(gv, cfg.pow_block(l), g.dv);
  }

  if (cfg.enrich_levels() == cfg.levels()) {
    const std::uint32_t top = cfg.levels();
    const Gains gn = gains_for(cfg.mode(), cfg.weight(top));
    FeatureMatrix gk(cfg.level_tokens(top), d);
    FeatureMatrix gv(cfg.level_tokens(top), d);
    for (std::uint32_t kt = 0; kt < cfg.level_tokens(top); ++kt) {
      for (std::size_t t = 0; t < n; ++t) {
        accumulate(pyr_k.level(top), pyr_v.level(top), gn, kt, t, gk, gv);
      }
    }
    broadcast(gk, cfg.pow_block(top), g.dk);
    broadcast(gv, cfg.pow_block(top), g.dv);
  }
  return g;
}

void mask_kv_backward(const FeatureMatrix& d_out, const ForwardState& saved,
                      const FeatureMatrix& q, const Pyramid& pyr_k,
                      const Pyramid& pyr_v, const SelectionResult& sel,
                      const ValidatedConfig& cfg, FeatureMatrix& dk,
                      FeatureMatrix& dv) {
  const std::size_t n = cfg.n();
  const std::size_t d = cfg.d();
  if (q.rows() != n || q.cols() != d || !q.same_shape(d_out) ||
      !q.same_shape(saved.output) || saved.row_max.size() != n ||
      saved.row_denom.size() != n) {
    throw ShapeMismatch("mask_kv_backward: inputs disagree with config");
  }
  const std::uint32_t block = cfg.block_size();
  const real scale = cfg.scale();

  dk = FeatureMatrix(n, d);
  dv = FeatureMatrix(n, d);

  std::vector<real> row_d(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      row_d[t] = plain_dot(d_out.row(t), saved.output.row(t), d);
    }
  });

  // Walks one key block's mask column and accumulates its dk/dv rows.
  auto scan_column = [&](const FeatureMatrix& lk, const FeatureMatrix& lv,
                         const Gains& gn, const std::uint8_t* mask,
                         std::uint32_t tq, std::uint32_t tk, std::uint32_t b,
                         std::uint64_t span, FeatureMatrix& gk,
                         FeatureMatrix& gv) {
    for (std::uint32_t i = 0; i < tq; ++i) {
      if (!mask[std::size_t(i) * tk + b]) continue;
      for (std::uint64_t t = i * span; t < (i + 1) * span; ++t) {
        const real* qt = q.row(t);
        const real* gt = d_out.row(t);
        for (std::uint32_t bb = 0; bb < block; ++bb) {
          const std::size_t kt = std::size_t(b) * block + bb;
          const real s =
              scale * gn.key * plain_dot(qt, lk.row(kt), d) + gn.bias;
          const real p = std::exp(s - saved.row_max[t]) / saved.row_denom[t];
          const real dp = gn.value * plain_dot(gt, lv.row(kt), d);
          const real ds = p * (dp - row_d[t]);
          real* gkr = gk.row(kt);
          real* gvr = gv.row(kt);
          for (std::size_t e = 0; e < d; ++e) {
            gkr[e] += scale * gn.key * ds * qt[e];
            gvr[e] += p * gn.value * gt[e];
          }
        }
      }
    }
  };
  auto broadcast_add = [&](const FeatureMatrix& src, std::uint64_t group,
                           FeatureMatrix& dst) {
    const real inv = real(1) / static_cast<real>(group);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t) {
        const real* s = src.row(t / group);
        real* o = dst.row(t);
        for (std::size_t e = 0; e < d; ++e) o[e] += s[e] * inv;
      }
    });
  };

  const std::uint32_t table_levels =
      std::min(cfg.enrich_levels() + 1, cfg.levels());
  for (std::uint32_t l = 0; l < table_levels; ++l) {
    const LevelIndices& table = sel.per_level[l];
    const std::uint32_t tq = table.query_blocks;
    const std::uint32_t tk = cfg.level_blocks(l);
    std::vector<std::uint8_t> mask(std::size_t(tq) * tk, 0);
    parallel_for(tq, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        for (std::uint32_t b : table.row(static_cast<std::uint32_t>(i))) {
          mask[i * tk + b] = 1;
        }
      }
    });
    const Gains gn = gains_for(cfg.mode(), cfg.weight(l));
    const std::uint64_t span = cfg.pow_block(l + 1);
    if (l == 0) {
      parallel_for(tk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
          scan_column(pyr_k.level(0), pyr_v.level(0), gn, mask.data(), tq, tk,
                      static_cast<std::uint32_t>(b), span, dk, dv);
        }
      });
    } else {
      FeatureMatrix gk(cfg.level_tokens(l), d);
      FeatureMatrix gv(cfg.level_tokens(l), d);
      parallel_for(tk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
          scan_column(pyr_k.level(l), pyr_v.level(l), gn, mask.data(), tq, tk,
                      static_cast<std::uint32_t>(b), span, gk, gv);
        }
      });
      broadcast_add(gk, cfg.pow_block(l), dk);
      broadcast_add(gv, cfg.pow_block(l), dv);
    }
  }

  if (cfg.enrich_levels() == cfg.levels()) {
    const std::uint32_t top = cfg.levels();
    const Gains gn = gains_for(cfg.mode(), cfg.weight(top));
    FeatureMatrix gk(cfg.level_tokens(top), d);
    FeatureMatrix gv(cfg.level_tokens(top), d);
    parallel_for(cfg.level_blocks(top), [&](std::size_t begin,
                                            std::size_t end) {
      for (std::size_t b = begin; b < end; ++b) {
        for (std::size_t t = 0; t < n; ++t) {
          const real* qt = q.row(t);
          const real* gt = d_out.row(t);
          for (std::uint32_t bb = 0; bb < block; ++bb) {
            const std::size_t kt = b * block + bb;
            const real s = scale * gn.key *
                               plain_dot(qt, pyr_k.level(top).row(kt), d) +
                           gn.bias;
            const real p =
                std::exp(s - saved.row_max[t]) / saved.row_denom[t];
            const real dp =
                gn.value * plain_dot(gt, pyr_v.level(top).row(kt), d);
            const real ds = p * (dp - row_d[t]);
            real* gkr = gk.row(kt);
            real* gvr = gv.row(kt);
            for (std::size_t e = 0; e < d; ++e) {
              gkr[e] += scale * gn.key * ds * qt[e];
              gvr[e] += p * gn.value * gt[e];
            }
          }
        }
      }
    });
    broadcast_add(gk, cfg.pow_block(top), dk);
    broadcast_add(gv, cfg.pow_block(top), dv);
  }
}

GradCheckReport finite_diff_check(const FeatureMatrix& q,
                                  const FeatureMatrix& k,
                                  const FeatureMatrix& v,
                                  const FeatureMatrix& cotangent,
                                  const ValidatedConfig& cfg, real step,
                                  std::size_t max_coords,
                                  std::uint64_t subsample_seed) {
  if (sizeof(real) != sizeof(double)) {
    throw PrecisionError(
        "finite differences need the double-precision build");
  }
  if (q.rows() != cfg.n() || q.cols() != cfg.d() || !q.same_shape(k) ||
      !q.same_shape(v) || !q.same_shape(cotangent)) {
    throw ShapeMismatch("finite_diff_check: inputs disagree with config");
  }
  if (!(step > real(0))) {
    throw ConfigError("finite_diff_check: step must be positive");
  }

  const std::uint32_t block = cfg.block_size();
  const std::uint32_t levels = cfg.levels();

  // Frozen differentiation point: the plan (Top-K indices) is a constant of
  // the function being differentiated.
  const Pyramid base_q = build_pyramid(q, block, levels);
  const Pyramid base_k = build_pyramid(k, block, levels);
  const Pyramid base_v = build_pyramid(v, block, levels);
  const SelectionResult sel = hierarchical_topk(base_q, base_k, cfg);
  const EnrichedKVPlan plan = build_plan(sel, cfg);
  const std::vector<TransposedIndices> transposed = transpose_all(sel, cfg);
  const ForwardState fwd =
      llsa_forward(q, k, v, base_k, base_v, plan, cfg);
  const GradientSet analytic = llsa_backward(
      cotangent, fwd, q, k, v, base_k, base_v, plan, transposed, cfg);

  FeatureMatrix qq = q, kk = k, vv = v;
  auto loss = [&]() {
    const Pyramid pk = build_pyramid(kk, block, levels);
    const Pyramid pv = build_pyramid(vv, block, levels);
    const ForwardState out = llsa_forward(qq, kk, vv, pk, pv, plan, cfg);
    real acc = real(0);
    const std::size_t total = out.output.size();
    const real* o = out.output.data();
    const real* g = cotangent.data();
    for (std::size_t i = 0; i < total; ++i) acc += o[i] * g[i];
    return acc;
  };

  const std::size_t per_matrix = q.rows() * q.cols();
  const std::size_t total = 3 * per_matrix;
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t(0));
  std::size_t count = total;
  if (max_coords > 0 && max_coords < total) {
    // Deterministic partial Fisher-Yates driven by a splitmix64 stream.
    std::uint64_t state = subsample_seed;
    auto next = [&state]() {
      state += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = state;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      return z ^ (z >> 31);
    };
    for (std::size_t i = 0; i < max_coords; ++i) {
      const std::size_t j = i + std::size_t(next() % (total - i));
      std::swap(coords[i], coords[j]);
    }
    count = max_coords;
  }

  GradCheckReport report;
  report.step = step;
  report.coords_checked = count;
  for (std::size_t idx = 0; idx < count; ++idx) {
    const std::size_t c = coords[idx];
    FeatureMatrix* target = &qq;
    const FeatureMatrix* grad = &analytic.dq;
    char tag = 'q';
    if (c >= 2 * per_matrix) {
      target = &vv;
      grad = &analytic.dv;
      tag = 'v';
    } else if (c >= per_matrix) {
      target = &kk;
      grad = &analytic.dk;
      tag = 'k';
    }
    const std::size_t flat = c % per_matrix;
    const std::size_t row = flat / q.cols();
    const std::size_t col = flat % q.cols();

    real& x = target->at(row, col);
    const real saved_x = x;
    x = saved_x + step;
    const real up = loss();
    x = saved_x - step;
    const real down = loss();
    x = saved_x;

    const real fd = (up - down) / (2 * step);
    const real an = grad->at(row, col);
    const real rel = std::abs(fd - an) /
                     std::max({real(1), std::abs(fd), std::abs(an)});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_matrix = tag;
      report.worst_row = row;
      report.worst_col = col;
    }
  }
  return report;
}

}  // namespace llsa::oracle
