// SPDX-License-Identifier: Apache-2.0
#include "llsa/attention.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "llsa/detail/math.hpp"
#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

namespace {

void fnv_word(std::uint64_t& h, std::uint64_t w) {
  h ^= w;
  h *= 0x100000001b3ULL;
}

void fnv_matrix(std::uint64_t& h, const FeatureMatrix& m) {
  fnv_word(h, m.rows());
  fnv_word(h, m.cols());
  const real* p = m.data();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if constexpr (sizeof(real) == 8) {
      fnv_word(h, std::bit_cast<std::uint64_t>(static_cast<double>(p[i])));
    } else {
      fnv_word(h, std::bit_cast<std::uint32_t>(static_cast<float>(p[i])));
    }
  }
}

std::uint32_t max_plan_level(const EnrichedKVPlan& plan) {
  std::uint32_t top = 0;
  for (const PlanEntry& e : plan.entries) top = std::max(top, e.level);
  return top;
}

void check_forward_shapes(const FeatureMatrix& q, const FeatureMatrix& k,
                          const FeatureMatrix& v, const Pyramid& pyr_k,
                          const Pyramid& pyr_v, const EnrichedKVPlan& plan,
                          const ValidatedConfig& cfg) {
  const std::size_t n = cfg.n();
  const std::size_t d = cfg.d();
  if (q.rows() != n || q.cols() != d || k.rows() != n || k.cols() != d ||
      v.rows() != n || v.cols() != d) {
    throw ShapeMismatch("q/k/v must be n x d for the validated config");
  }
  if (plan.fine_blocks != cfg.fine_blocks()) {
    throw ShapeMismatch("plan covers " + std::to_string(plan.fine_blocks) +
                        " fine blocks, config has " +
                        std::to_string(cfg.fine_blocks()));
  }
  const std::uint32_t need = max_plan_level(plan);
  if (pyr_k.depth() < need || pyr_v.depth() < need) {
    throw ShapeMismatch("pyramids are shallower than the plan's levels");
  }
  const std::uint32_t block = cfg.block_size();
  for (std::uint32_t l = 0; l <= need; ++l) {
    const std::size_t rows = pyr_k.level(l).rows();
    if (rows != pyr_v.level(l).rows() || pyr_k.level(l).cols() != d ||
        pyr_v.level(l).cols() != d || rows % block != 0) {
      throw ShapeMismatch("pyramid level " + std::to_string(l) +
                          " has inconsistent shape");
    }
  }
  for (const PlanEntry& e : plan.entries) {
    if (std::size_t(e.block + 1) * block > pyr_k.level(e.level).rows()) {
      throw IndexOutOfRange("plan names key block " + std::to_string(e.block) +
                            " beyond level " + std::to_string(e.level));
    }
  }
}

}  // namespace

EnrichedKVPlan build_plan(const SelectionResult& sel,
                          const ValidatedConfig& cfg) {
  if (sel.per_level.size() != cfg.levels()) {
    throw ShapeMismatch("selection depth disagrees with the config");
  }
  const std::uint32_t levels = cfg.levels();
  const std::uint32_t enrich = cfg.enrich_levels();
  for (std::uint32_t l = 0; l < std::min(enrich + 1, levels); ++l) {
    const LevelIndices& table = sel.per_level[l];
    if (table.level != l || table.k != cfg.top_k() ||
        table.query_blocks != cfg.n() / cfg.pow_block(l + 1)) {
      throw ShapeMismatch("selection table at level " + std::to_string(l) +
                          " disagrees with the config");
    }
  }

  EnrichedKVPlan plan;
  plan.fine_blocks = cfg.fine_blocks();
  plan.entries_per_block = effective_block_count(cfg);
  plan.entries.resize(std::size_t(plan.fine_blocks) * plan.entries_per_block);

  parallel_for(plan.fine_blocks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      PlanEntry* out =
          plan.entries.data() + i * plan.entries_per_block;
      // Levels ascend; selection rows are already sorted, so blocks ascend
      // within each level.
      for (std::uint32_t l = 0; l < std::min(enrich + 1, levels); ++l) {
        const std::uint32_t row =
            static_cast<std::uint32_t>(i / cfg.pow_block(l));
        for (std::uint32_t b : sel.per_level[l].row(row)) {
          *out++ = PlanEntry{l, b, cfg.weight(l)};
        }
      }
      if (enrich == levels) {
        for (std::uint32_t b = 0; b < cfg.level_blocks(levels); ++b) {
          *out++ = PlanEntry{levels, b, cfg.weight(levels)};
        }
      }
    }
  });
  return plan;
}

std::uint64_t input_checksum(const FeatureMatrix& q, const FeatureMatrix& k,
                             const FeatureMatrix& v, const EnrichedKVPlan& plan,
                             const ValidatedConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_word(h, cfg.n());
  fnv_word(h, cfg.d());
  fnv_word(h, cfg.block_size());
  fnv_word(h, cfg.top_k());
  fnv_word(h, cfg.levels());
  fnv_word(h, cfg.enrich_levels());
  fnv_word(h, static_cast<std::uint64_t>(cfg.mode()));
  fnv_word(h, cfg.safe_softmax() ? 1 : 0);
  fnv_word(h, std::bit_cast<std::uint64_t>(static_cast<double>(cfg.scale())));
  fnv_word(h, plan.fine_blocks);
  fnv_word(h, plan.entries_per_block);
  fnv_matrix(h, q);
  fnv_matrix(h, k);
  fnv_matrix(h, v);
  return h;
}

ForwardState llsa_forward(const FeatureMatrix& q, const FeatureMatrix& k,
                          const FeatureMatrix& v, const Pyramid& pyr_k,
                          const Pyramid& pyr_v, const EnrichedKVPlan& plan,
                          const ValidatedConfig& cfg) {
  check_forward_shapes(q, k, v, pyr_k, pyr_v, plan, cfg);

  const std::size_t n = cfg.n();
  const std::size_t d = cfg.d();
  const std::uint32_t block = cfg.block_size();
  const real scale = cfg.scale();
  const bool safe = cfg.safe_softmax();
  const bool scale_kv = cfg.mode() == ReweightMode::ScaleKV;

  ForwardState state;
  state.output = FeatureMatrix(n, d);
  state.row_max.assign(n, real(0));
  state.row_denom.assign(n, real(0));
  state.input_checksum = input_checksum(q, k, v, plan, cfg);
  state.mul_accs = std::uint64_t(n) * plan.entries_per_block * block * d;

  std::atomic<bool> bad{false};
  parallel_for(plan.fine_blocks, [&](std::size_t begin, std::size_t end) {
    std::vector<real> acc(d);
    const std::size_t epb = plan.entries_per_block;
    std::vector<real> key_gain(epb), value_gain(epb), logit_bias(epb);
    for (std::size_t i = begin; i < end; ++i) {
      const auto entries = plan.block(static_cast<std::uint32_t>(i));
      for (std::size_t e = 0; e < epb; ++e) {
        key_gain[e] = scale_kv ? entries[e].weight : real(1);
        value_gain[e] = key_gain[e];
        logit_bias[e] = scale_kv ? real(0) : std::log(entries[e].weight);
      }
      for (std::uint32_t r = 0; r < block; ++r) {
        const std::size_t t = i * block + r;
        const real* qt = q.row(t);
        real m = safe ? -std::numeric_limits<real>::infinity() : real(0);
        real denom = real(0);
        std::fill(acc.begin(), acc.end(), real(0));
        for (std::size_t e = 0; e < epb; ++e) {
          const FeatureMatrix& keys = pyr_k.level(entries[e].level);
          const FeatureMatrix& values = pyr_v.level(entries[e].level);
          const std::size_t base = std::size_t(entries[e].block) * block;
          for (std::uint32_t b = 0; b < block; ++b) {
            const real s = scale * key_gain[e] *
                               detail::dot(qt, keys.row(base + b), d) +
                           logit_bias[e];
            if (safe && s > m) {
              const real rescale = std::exp(m - s);
              denom *= rescale;
              for (std::size_t j = 0; j < d; ++j) acc[j] *= rescale;
              m = s;
            }
            const real p = std::exp(s - m);
            denom += p;
            detail::axpy(acc.data(), values.row(base + b), p * value_gain[e],
                         d);
          }
        }
        real* out = state.output.row(t);
        const real inv = real(1) / denom;
        for (std::size_t j = 0; j < d; ++j) {
          out[j] = acc[j] * inv;
          if (!std::isfinite(out[j])) bad.store(true);
        }
        state.row_max[t] = safe ? m : real(0);
        state.row_denom[t] = denom;
        if (!std::isfinite(denom) || denom <= real(0)) bad.store(true);
      }
    }
  });
  if (bad.load()) {
    throw NonFiniteError("attention output contains non-finite values");
  }
  return state;
}

}  // namespace llsa
