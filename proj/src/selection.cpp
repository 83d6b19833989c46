// SPDX-License-Identifier: Apache-2.0
#include "llsa/selection.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

#include "llsa/detail/math.hpp"
#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"

namespace llsa {

namespace {

// Keeps the top_k positions of `scores` ranked by (score desc, position asc)
// and writes the mapped candidate ids, sorted ascending, to `out`.
// `positions` and `ids` are caller-provided scratch (ids may be empty when the
// position itself is the id).
void topk_row(const std::vector<real>& scores, std::uint32_t top_k,
              const std::vector<std::uint32_t>& ids,
              std::vector<std::uint32_t>& positions,
              std::span<std::uint32_t> out) {
  const std::uint32_t count = static_cast<std::uint32_t>(scores.size());
  positions.resize(count);
  std::iota(positions.begin(), positions.end(), 0u);
  std::partial_sort(positions.begin(), positions.begin() + top_k,
                    positions.end(),
                    [&scores](std::uint32_t a, std::uint32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;  // ties: smaller index wins
                    });
  for (std::uint32_t j = 0; j < top_k; ++j) {
    out[j] = ids.empty() ? positions[j] : ids[positions[j]];
  }
  std::sort(out.begin(), out.end());
}

}  // namespace

LevelIndices select_coarsest(const FeatureMatrix& q_top,
                             const FeatureMatrix& k_top, std::uint32_t top_k,
                             real scale, std::uint32_t out_level,
                             std::uint64_t* mul_accs) {
  if (q_top.cols() != k_top.cols()) {
    throw ShapeMismatch("coarsest selection: query/key widths differ");
  }
  const std::uint32_t candidates = static_cast<std::uint32_t>(k_top.rows());
  if (top_k < 1 || top_k > candidates) {
    throw TopKError("top_k " + std::to_string(top_k) +
                    " outside [1, " + std::to_string(candidates) + "]");
  }
  const std::size_t d = q_top.cols();

  LevelIndices out;
  out.level = out_level;
  out.query_blocks = static_cast<std::uint32_t>(q_top.rows());
  out.k = top_k;
  out.indices.resize(std::size_t(out.query_blocks) * top_k);

  static const std::vector<std::uint32_t> kIdentity;  // positions are the ids
  parallel_for(q_top.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<real> scores(candidates);
    std::vector<std::uint32_t> positions;
    for (std::size_t r = begin; r < end; ++r) {
      const real* q = q_top.row(r);
      for (std::uint32_t c = 0; c < candidates; ++c) {
        scores[c] = scale * detail::dot(q, k_top.row(c), d);
      }
      topk_row(scores, top_k, kIdentity, positions,
               out.row(static_cast<std::uint32_t>(r)));
    }
  });
  if (mul_accs) {
    *mul_accs += std::uint64_t(q_top.rows()) * candidates * d;
  }
  return out;
}

LevelIndices select_level(const FeatureMatrix& q_level,
                          const FeatureMatrix& k_level,
                          const LevelIndices& parent, std::uint32_t top_k,
                          real scale, std::uint32_t block_size,
                          std::uint64_t* mul_accs) {
  if (parent.level == 0) {
    throw LevelError("select_level needs a parent table at level >= 1");
  }
  if (q_level.cols() != k_level.cols()) {
    throw ShapeMismatch("level selection: query/key widths differ");
  }
  if (q_level.rows() !=
      std::size_t(parent.query_blocks) * block_size) {
    throw ShapeMismatch("level selection: expected " +
                        std::to_string(std::size_t(parent.query_blocks) *
                                       block_size) +
                        " query tokens, got " + std::to_string(q_level.rows()));
  }
  if (k_level.rows() % block_size != 0) {
    throw ShapeMismatch("level selection: key token count not a multiple of "
                        "the block size");
  }
  const std::uint32_t candidates = parent.k * block_size;
  if (top_k < 1 || top_k > candidates) {
    throw TopKError("top_k " + std::to_string(top_k) +
                    " outside [1, " + std::to_string(candidates) + "]");
  }
  const std::uint32_t key_blocks =
      static_cast<std::uint32_t>(k_level.rows() / block_size);
  const std::size_t d = q_level.cols();

  LevelIndices out;
  out.level = parent.level - 1;
  out.query_blocks = static_cast<std::uint32_t>(q_level.rows());
  out.k = top_k;
  out.indices.resize(std::size_t(out.query_blocks) * top_k);

  parallel_for(parent.query_blocks, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> cand_ids(candidates);
    std::vector<real> scores(candidates);
    std::vector<std::uint32_t> positions;
    for (std::size_t i = begin; i < end; ++i) {
      const auto parent_row = parent.row(static_cast<std::uint32_t>(i));
      for (std::uint32_t j = 0; j < parent.k; ++j) {
        if (parent_row[j] >= key_blocks) {
          throw IndexOutOfRange("parent index " +
                                std::to_string(parent_row[j]) +
                                " >= key block count " +
                                std::to_string(key_blocks));
        }
        for (std::uint32_t b = 0; b < block_size; ++b) {
          cand_ids[j * block_size + b] = parent_row[j] * block_size + b;
        }
      }
      for (std::uint32_t r = 0; r < block_size; ++r) {
        const real* q = q_level.row(i * block_size + r);
        for (std::uint32_t c = 0; c < candidates; ++c) {
          scores[c] = scale * detail::dot(q, k_level.row(cand_ids[c]), d);
        }
        topk_row(scores, top_k, cand_ids, positions,
                 out.row(static_cast<std::uint32_t>(i * block_size + r)));
      }
    }
  });
  if (mul_accs) {
    *mul_accs += std::uint64_t(q_level.rows()) * candidates * d;
  }
  return out;
}

SelectionResult hierarchical_topk(const Pyramid& pyr_q, const Pyramid& pyr_k,
                                  const ValidatedConfig& cfg) {
  const std::uint32_t levels = cfg.levels();
  if (pyr_q.depth() < levels || pyr_k.depth() < levels) {
    throw ShapeMismatch("pyramids are shallower than the configured levels");
  }
  for (std::uint32_t l = 0; l <= levels; ++l) {
    if (pyr_q.level(l).rows() != cfg.level_tokens(l) ||
        pyr_k.level(l).rows() != cfg.level_tokens(l) ||
        pyr_q.level(l).cols() != cfg.d() || pyr_k.level(l).cols() != cfg.d()) {
      throw ShapeMismatch("pyramid level " + std::to_string(l) +
                          " disagrees with the config");
    }
  }

  SelectionResult sel;
  sel.per_level.resize(levels);
  sel.coarsest_full = true;
  sel.per_level[levels - 1] =
      select_coarsest(pyr_q.level(levels), pyr_k.level(levels), cfg.top_k(),
                      cfg.scale(), levels - 1, &sel.mul_accs);
  for (std::uint32_t l = levels - 1; l >= 1; --l) {
    sel.per_level[l - 1] =
        select_level(pyr_q.level(l), pyr_k.level(l), sel.per_level[l],
                     cfg.top_k(), cfg.scale(), cfg.block_size(),
                     &sel.mul_accs);
  }
  return sel;
}

void dump_selection(const SelectionResult& sel, std::ostream& out) {
  for (const LevelIndices& table : sel.per_level) {
    for (std::uint32_t i = 0; i < table.query_blocks; ++i) {
      out << "level " << table.level << " / row " << i << ":";
      for (std::uint32_t idx : table.row(i)) out << ' ' << idx;
      out << '\n';
    }
  }
}

}  // namespace llsa
