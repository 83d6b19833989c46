// SPDX-License-Identifier: Apache-2.0
#include "llsa/attention_grad.hpp"

#include <cmath>
#include <string>

#include "llsa/detail/math.hpp"
#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

namespace {

// D_t = sum_j d_out[t,j] * output[t,j]; appears in dS = P*(dP - D).
std::vector<real> rowwise_dot(const FeatureMatrix& a, const FeatureMatrix& b) {
  std::vector<real> out(a.rows());
  const std::size_t d = a.cols();
  parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      out[t] = detail::dot(a.row(t), b.row(t), d);
    }
  });
  return out;
}

struct ModeGains {
  real key_gain;    // multiplies q.k inside the logit
  real value_gain;  // multiplies v in the numerator (and its adjoint)
  real logit_bias;  // added to the logit
};

ModeGains gains_for(const ValidatedConfig& cfg, real weight) {
  if (cfg.mode() == ReweightMode::ScaleKV) {
    return {weight, weight, real(0)};
  }
  return {real(1), real(1), std::log(weight)};
}

// Accumulates dk/dv rows for one level-l key block from the fine query tokens
// of the given query blocks. grad_k/grad_v are the level-l accumulators (the
// fine matrices themselves for l = 0).
void accumulate_key_block(
    const FeatureMatrix& d_out, const ForwardState& saved,
    const FeatureMatrix& q, const FeatureMatrix& keys,
    const FeatureMatrix& values, const std::vector<real>& d_row,
    std::span<const std::uint32_t> query_blocks, std::uint32_t key_block,
    std::size_t fine_tokens_per_query_block, const ModeGains& g, real scale,
    std::uint32_t block, FeatureMatrix& grad_k, FeatureMatrix& grad_v) {
  const std::size_t d = q.cols();
  const std::size_t key_base = std::size_t(key_block) * block;
  for (std::uint32_t i : query_blocks) {
    const std::size_t t_begin = std::size_t(i) * fine_tokens_per_query_block;
    const std::size_t t_end = t_begin + fine_tokens_per_query_block;
    for (std::size_t t = t_begin; t < t_end; ++t) {
      const real* qt = q.row(t);
      const real* dout = d_out.row(t);
      const real m = saved.row_max[t];
      const real inv_denom = real(1) / saved.row_denom[t];
      for (std::uint32_t b = 0; b < block; ++b) {
        const std::size_t kt = key_base + b;
        const real s =
            scale * g.key_gain * detail::dot(qt, keys.row(kt), d) +
            g.logit_bias;
        const real p = std::exp(s - m) * inv_denom;
        const real dp = g.value_gain * detail::dot(dout, values.row(kt), d);
        const real ds = p * (dp - d_row[t]);
        detail::axpy(grad_k.row(kt), qt, scale * g.key_gain * ds, d);
        detail::axpy(grad_v.row(kt), dout, p * g.value_gain, d);
      }
    }
  }
}

void check_saved_shapes(const FeatureMatrix& d_out, const ForwardState& saved,
                        const ValidatedConfig& cfg) {
  const std::size_t n = cfg.n();
  const std::size_t d = cfg.d();
  if (d_out.rows() != n || d_out.cols() != d) {
    throw ShapeMismatch("cotangent must be n x d");
  }
  if (saved.output.rows() != n || saved.output.cols() != d ||
      saved.row_max.size() != n || saved.row_denom.size() != n) {
    throw ShapeMismatch("saved forward state has wrong dimensions");
  }
}

}  // namespace

void kv_backward(const FeatureMatrix& d_out, const ForwardState& saved,
                 const FeatureMatrix& q, const Pyramid& pyr_k,
                 const Pyramid& pyr_v,
                 const std::vector<TransposedIndices>& transposed,
                 const ValidatedConfig& cfg, FeatureMatrix& dk,
                 FeatureMatrix& dv, std::uint64_t* mul_accs) {
  check_saved_shapes(d_out, saved, cfg);
  if (q.rows() != cfg.n() || q.cols() != cfg.d()) {
    throw ShapeMismatch("q must be n x d");
  }
  if (transposed.size() != cfg.levels()) {
    throw ShapeMismatch("expected one transposed table per level");
  }

  const std::size_t n = cfg.n();
  const std::size_t d = cfg.d();
  const std::uint32_t block = cfg.block_size();
  const real scale = cfg.scale();
  const std::uint32_t levels = cfg.levels();
  const std::uint32_t enrich = cfg.enrich_levels();

  dk = FeatureMatrix(n, d);
  dv = FeatureMatrix(n, d);
  const std::vector<real> d_row = rowwise_dot(d_out, saved.output);
  std::uint64_t macs = 2 * n * d;  // the D pre-pass

  for (std::uint32_t l = 0; l < std::min(enrich + 1, levels); ++l) {
    const TransposedIndices& table = transposed[l];
    if (table.key_blocks != cfg.level_blocks(l)) {
      throw ShapeMismatch("transposed table at level " + std::to_string(l) +
                          " disagrees with the config");
    }
    const ModeGains g = gains_for(cfg, cfg.weight(l));
    const std::size_t span = cfg.pow_block(l + 1);  // fine tokens per block
    const FeatureMatrix& keys = pyr_k.level(l);
    const FeatureMatrix& values = pyr_v.level(l);

    if (l == 0) {
      parallel_for(table.key_blocks, [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
          accumulate_key_block(d_out, saved, q, keys, values, d_row,
                               table.segment(static_cast<std::uint32_t>(b)),
                               static_cast<std::uint32_t>(b), span, g, scale,
                               block, dk, dv);
        }
      });
    } else {
      FeatureMatrix grad_k(cfg.level_tokens(l), d);
      FeatureMatrix grad_v(cfg.level_tokens(l), d);
      parallel_for(table.key_blocks, [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
          accumulate_key_block(d_out, saved, q, keys, values, d_row,
                               table.segment(static_cast<std::uint32_t>(b)),
                               static_cast<std::uint32_t>(b), span, g, scale,
                               block, grad_k, grad_v);
        }
      });
      // Pooling adjoint: each fine row inherits its ancestor's gradient
      // scaled by B^-l. Disjoint writes per fine row.
      const real inv = real(1) / static_cast<real>(cfg.pow_block(l));
      const std::size_t group = cfg.pow_block(l);
      parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          const real* gk = grad_k.row(t / group);
          const real* gv = grad_v.row(t / group);
          real* ok = dk.row(t);
          real* ov = dv.row(t);
          for (std::size_t j = 0; j < d; ++j) {
            ok[j] += gk[j] * inv;
            ov[j] += gv[j] * inv;
          }
        }
      });
    }
    macs += std::uint64_t(table.flat_queries.size()) * span * block * 4 * d;
  }

  if (enrich == levels) {
    // Coarsest level: every query attends to every coarsest block.
    const ModeGains g = gains_for(cfg, cfg.weight(levels));
    const FeatureMatrix& keys = pyr_k.level(levels);
    const FeatureMatrix& values = pyr_v.level(levels);
    const std::uint32_t key_blocks = cfg.level_blocks(levels);
    FeatureMatrix grad_k(cfg.level_tokens(levels), d);
    FeatureMatrix grad_v(cfg.level_tokens(levels), d);
    const std::uint32_t all_queries[] = {0};
    parallel_for(key_blocks, [&](std::size_t begin, std::size_t end) {
      for (std::size_t b = begin; b < end; ++b) {
        accumulate_key_block(d_out, saved, q, keys, values, d_row,
                             std::span<const std::uint32_t>(all_queries, 1),
                             static_cast<std::uint32_t>(b), n, g, scale, block,
                             grad_k, grad_v);
      }
    });
    const real inv = real(1) / static_cast<real>(cfg.pow_block(levels));
    const std::size_t group = cfg.pow_block(levels);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t) {
        const real* gk = grad_k.row(t / group);
        const real* gv = grad_v.row(t / group);
        real* ok = dk.row(t);
        real* ov = dv.row(t);
        for (std::size_t j = 0; j < d; ++j) {
          ok[j] += gk[j] * inv;
          ov[j] += gv[j] * inv;
        }
      }
    });
    macs += std::uint64_t(n) * cfg.level_tokens(levels) * 4 * d;
  }

  if (mul_accs) *mul_accs += macs;
}

GradientSet llsa_backward(const FeatureMatrix& d_out,
                          const ForwardState& saved, const FeatureMatrix& q,
                          const FeatureMatrix& k, const FeatureMatrix& v,
                          const Pyramid& pyr_k, const Pyramid& pyr_v,
                          const EnrichedKVPlan& plan,
                          const std::vector<TransposedIndices>& transposed,
                          const ValidatedConfig& cfg,
                          std::uint64_t* mul_accs) {
  check_saved_shapes(d_out, saved, cfg);
  if (saved.input_checksum != input_checksum(q, k, v, plan, cfg)) {
    throw StaleState(
        "saved forward state was computed from different inputs");
  }

  const std::size_t n = cfg.n();
  const std::size_t d = cfg.d();
  const std::uint32_t block = cfg.block_size();
  const real scale = cfg.scale();

  GradientSet grads;
  grads.dq = FeatureMatrix(n, d);
  const std::vector<real> d_row = rowwise_dot(d_out, saved.output);

  // Query-major phase: dq accumulates over each token's own candidate list,
  // in the plan's canonical order.
  parallel_for(plan.fine_blocks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto entries = plan.block(static_cast<std::uint32_t>(i));
      for (std::uint32_t r = 0; r < block; ++r) {
        const std::size_t t = i * block + r;
        const real* qt = q.row(t);
        const real* dout = d_out.row(t);
        real* dqt = grads.dq.row(t);
        const real m = saved.row_max[t];
        const real inv_denom = real(1) / saved.row_denom[t];
        for (const PlanEntry& e : entries) {
          const ModeGains g = gains_for(cfg, e.weight);
          const FeatureMatrix& keys = pyr_k.level(e.level);
          const FeatureMatrix& values = pyr_v.level(e.level);
          const std::size_t base = std::size_t(e.block) * block;
          for (std::uint32_t b = 0; b < block; ++b) {
            const real* kt = keys.row(base + b);
            const real s =
                scale * g.key_gain * detail::dot(qt, kt, d) + g.logit_bias;
            const real p = std::exp(s - m) * inv_denom;
            const real dp =
                g.value_gain * detail::dot(dout, values.row(base + b), d);
            const real ds = p * (dp - d_row[t]);
            detail::axpy(dqt, kt, scale * g.key_gain * ds, d);
          }
        }
      }
    }
  });
  std::uint64_t macs =
      std::uint64_t(n) * plan.entries_per_block * block * 3 * d + 2 * n * d;

  kv_backward(d_out, saved, q, pyr_k, pyr_v, transposed, cfg, grads.dk,
              grads.dv, &macs);
  if (mul_accs) *mul_accs += macs;
  return grads;
}

}  // namespace llsa
