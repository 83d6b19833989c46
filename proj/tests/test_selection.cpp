// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "llsa/config.hpp"
#include "llsa/errors.hpp"
#include "llsa/parallel.hpp"
#include "llsa/pyramid.hpp"
#include "llsa/selection.hpp"
#include "llsa/tensorio.hpp"

using namespace llsa;

namespace {

// Test-local reference: rank candidate ids by (score desc, id asc), keep
// top_k, return them ascending. Scores computed with a plain loop.
std::vector<std::uint32_t> reference_topk(const real* q,
                                          const FeatureMatrix& keys,
                                          const std::vector<std::uint32_t>& ids,
                                          std::uint32_t top_k, real scale) {
  std::vector<std::pair<real, std::uint32_t>> scored;
  scored.reserve(ids.size());
  for (std::uint32_t id : ids) {
    real s = real(0);
    for (std::size_t c = 0; c < keys.cols(); ++c) s += q[c] * keys.at(id, c);
    scored.emplace_back(scale * s, id);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a,
                                                    const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  for (std::uint32_t j = 0; j < top_k; ++j) out.push_back(scored[j].second);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint32_t> iota_ids(std::uint32_t count) {
  std::vector<std::uint32_t> ids(count);
  std::iota(ids.begin(), ids.end(), 0u);
  return ids;
}

LLSAConfig make(std::uint64_t n, std::uint32_t d, std::uint32_t b,
                std::uint32_t k, std::uint32_t levels, std::uint32_t enrich) {
  LLSAConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.block_size = b;
  cfg.top_k = k;
  cfg.levels = levels;
  cfg.enrich_levels = enrich;
  return cfg;
}

}  // namespace

TEST_CASE("coarsest selection matches a per-row reference ranking") {
  const FeatureMatrix q = gen_random(12, 6, 21);
  const FeatureMatrix k = gen_random(20, 6, 22);
  const real scale = real(0.33);
  const LevelIndices out = select_coarsest(q, k, 5, scale, 1);
  CHECK(out.level == 1);
  CHECK(out.query_blocks == 12);
  CHECK(out.k == 5);
  const std::vector<std::uint32_t> all = iota_ids(20);
  for (std::uint32_t i = 0; i < 12; ++i) {
    const std::vector<std::uint32_t> expect =
        reference_topk(q.row(i), k, all, 5, scale);
    const auto row = out.row(i);
    REQUIRE(row.size() == 5);
    for (std::size_t j = 0; j < 5; ++j) CHECK(row[j] == expect[j]);
  }
}

TEST_CASE("keeping every candidate yields the identity set") {
  const FeatureMatrix q = gen_random(6, 4, 1);
  const FeatureMatrix k = gen_random(8, 4, 2);
  const LevelIndices out = select_coarsest(q, k, 8, real(1), 0);
  for (std::uint32_t i = 0; i < 6; ++i) {
    const auto row = out.row(i);
    for (std::uint32_t j = 0; j < 8; ++j) CHECK(row[j] == j);
  }
}

TEST_CASE("ties break toward the smaller index") {
  // All keys identical: every score ties, so the first K indices win.
  FeatureMatrix k(10, 3);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 3; ++c) k.at(r, c) = real(c) + real(1);
  }
  const FeatureMatrix q = gen_random(4, 3, 77);
  const LevelIndices out = select_coarsest(q, k, 4, real(1), 0);
  for (std::uint32_t i = 0; i < 4; ++i) {
    const auto row = out.row(i);
    for (std::uint32_t j = 0; j < 4; ++j) CHECK(row[j] == j);
  }
}

TEST_CASE("coarsest selection validates arguments") {
  const FeatureMatrix q = gen_random(4, 4, 1);
  const FeatureMatrix k = gen_random(8, 4, 2);
  const FeatureMatrix wide = gen_random(8, 5, 3);
  CHECK_THROWS_AS(select_coarsest(q, wide, 2, real(1), 0), ShapeMismatch);
  CHECK_THROWS_AS(select_coarsest(q, k, 9, real(1), 0), TopKError);
  CHECK_THROWS_AS(select_coarsest(q, k, 0, real(1), 0), TopKError);
}

TEST_CASE("level refinement gathers exactly the parent's candidate tokens") {
  // Hand-checkable layout: 16 level-l queries, 16 level-l key tokens in
  // 4 blocks; the parent table picks 2 blocks per level-(l+1) query token.
  const FeatureMatrix q = gen_random(16, 4, 5);
  const FeatureMatrix k = gen_random(16, 4, 6);
  const real scale = real(0.7);

  LevelIndices parent;
  parent.level = 1;
  parent.query_blocks = 4;
  parent.k = 2;
  parent.indices = {0, 2, 1, 3, 0, 1, 2, 3};

  const LevelIndices out = select_level(q, k, parent, 3, scale, 4);
  CHECK(out.level == 0);
  CHECK(out.query_blocks == 16);
  CHECK(out.k == 3);

  for (std::uint32_t t = 0; t < 16; ++t) {
    const auto prow = parent.row(t / 4);
    std::vector<std::uint32_t> cand;
    for (std::uint32_t b : prow) {
      for (std::uint32_t j = 0; j < 4; ++j) cand.push_back(b * 4 + j);
    }
    const std::vector<std::uint32_t> expect =
        reference_topk(q.row(t), k, cand, 3, scale);
    const auto row = out.row(t);
    for (std::size_t j = 0; j < 3; ++j) CHECK(row[j] == expect[j]);
    // Every selected token must come from a parent block.
    for (std::uint32_t idx : row) {
      CHECK(std::find(prow.begin(), prow.end(), idx / 4) != prow.end());
    }
  }
}

TEST_CASE("level refinement validates arguments") {
  const FeatureMatrix q = gen_random(16, 4, 5);
  const FeatureMatrix k = gen_random(16, 4, 6);
  LevelIndices parent;
  parent.level = 1;
  parent.query_blocks = 4;
  parent.k = 2;
  parent.indices = {0, 2, 1, 3, 0, 1, 2, 3};

  SUBCASE("parent at level 0 cannot refine further") {
    LevelIndices fine = parent;
    fine.level = 0;
    CHECK_THROWS_AS(select_level(q, k, fine, 2, real(1), 4), LevelError);
  }
  SUBCASE("query rows must match parent blocks * block size") {
    const FeatureMatrix small = gen_random(12, 4, 7);
    CHECK_THROWS_AS(select_level(small, k, parent, 2, real(1), 4),
                    ShapeMismatch);
  }
  SUBCASE("top_k bounded by the candidate count") {
    CHECK_THROWS_AS(select_level(q, k, parent, 9, real(1), 4), TopKError);
  }
  SUBCASE("parent entries must be valid key blocks") {
    LevelIndices bad = parent;
    bad.indices[3] = 4;  // only 4 key blocks exist
    CHECK_THROWS_AS(select_level(q, k, bad, 2, real(1), 4), IndexOutOfRange);
  }
}

TEST_CASE("hierarchical selection equals a masked-score reference") {
  const ValidatedConfig cfg = validate_config(make(128, 8, 4, 2, 2, 2));
  const FeatureMatrix q = gen_random(128, 8, 41);
  const FeatureMatrix k = gen_random(128, 8, 42);
  const Pyramid pq = build_pyramid(q, 4, 2);
  const Pyramid pk = build_pyramid(k, 4, 2);
  const SelectionResult sel = hierarchical_topk(pq, pk, cfg);
  REQUIRE(sel.per_level.size() == 2);
  CHECK(sel.coarsest_full);

  // Reference for the coarsest table: full ranking of level-2 tokens.
  const std::vector<std::uint32_t> all = iota_ids(cfg.level_tokens(2));
  for (std::uint32_t i = 0; i < cfg.level_tokens(2); ++i) {
    const std::vector<std::uint32_t> expect =
        reference_topk(pq.level(2).row(i), pk.level(2), all, 2, cfg.scale());
    const auto row = sel.per_level[1].row(i);
    for (std::size_t j = 0; j < 2; ++j) CHECK(row[j] == expect[j]);
  }
  // Reference for the refined table: candidates gathered from the parent.
  for (std::uint32_t t = 0; t < cfg.level_tokens(1); ++t) {
    std::vector<std::uint32_t> cand;
    for (std::uint32_t b : sel.per_level[1].row(t / 4)) {
      for (std::uint32_t j = 0; j < 4; ++j) cand.push_back(b * 4 + j);
    }
    const std::vector<std::uint32_t> expect =
        reference_topk(pq.level(1).row(t), pk.level(1), cand, 2, cfg.scale());
    const auto row = sel.per_level[0].row(t);
    for (std::size_t j = 0; j < 2; ++j) CHECK(row[j] == expect[j]);
  }
}

TEST_CASE("selected children always nest inside selected parents") {
  const ValidatedConfig cfg = validate_config(make(256, 8, 4, 3, 3, 3));
  const FeatureMatrix q = gen_random(256, 8, 51);
  const FeatureMatrix k = gen_random(256, 8, 52);
  const SelectionResult sel = hierarchical_topk(
      build_pyramid(q, 4, 3), build_pyramid(k, 4, 3), cfg);
  for (std::uint32_t l = 0; l + 1 < cfg.levels(); ++l) {
    const LevelIndices& child = sel.per_level[l];
    const LevelIndices& parent = sel.per_level[l + 1];
    for (std::uint32_t t = 0; t < child.query_blocks; ++t) {
      const auto prow = parent.row(t / 4);
      for (std::uint32_t idx : child.row(t)) {
        CHECK(std::find(prow.begin(), prow.end(), idx / 4) != prow.end());
      }
    }
  }
}

TEST_CASE("a single level reduces to the coarsest stage alone") {
  const ValidatedConfig cfg = validate_config(make(64, 4, 4, 3, 1, 0));
  const FeatureMatrix q = gen_random(64, 4, 61);
  const FeatureMatrix k = gen_random(64, 4, 62);
  const Pyramid pq = build_pyramid(q, 4, 1);
  const Pyramid pk = build_pyramid(k, 4, 1);
  const SelectionResult sel = hierarchical_topk(pq, pk, cfg);
  REQUIRE(sel.per_level.size() == 1);
  const LevelIndices direct =
      select_coarsest(pq.level(1), pk.level(1), 3, cfg.scale(), 0);
  CHECK(sel.per_level[0].indices == direct.indices);
}

TEST_CASE("selection is identical across thread counts") {
  const ValidatedConfig cfg = validate_config(make(256, 8, 4, 2, 2, 2));
  const FeatureMatrix q = gen_random(256, 8, 71);
  const FeatureMatrix k = gen_random(256, 8, 72);
  const Pyramid pq = build_pyramid(q, 4, 2);
  const Pyramid pk = build_pyramid(k, 4, 2);

  set_thread_count(1);
  const SelectionResult one = hierarchical_topk(pq, pk, cfg);
  set_thread_count(4);
  const SelectionResult four = hierarchical_topk(pq, pk, cfg);
  set_thread_count(0);

  REQUIRE(one.per_level.size() == four.per_level.size());
  for (std::size_t l = 0; l < one.per_level.size(); ++l) {
    CHECK(one.per_level[l].indices == four.per_level[l].indices);
  }
  CHECK(one.mul_accs == four.mul_accs);
}

TEST_CASE("positive rescaling never changes the ranking") {
  const FeatureMatrix q = gen_random(8, 4, 81);
  const FeatureMatrix k = gen_random(16, 4, 82);
  const LevelIndices a = select_coarsest(q, k, 4, real(1), 0);
  const LevelIndices b = select_coarsest(q, k, 4, real(0.17), 0);
  CHECK(a.indices == b.indices);
}

TEST_CASE("the work counter is analytic and scales near-linearly") {
  // With depth chosen as max_levels(n, B), the coarsest similarity matrix
  // stays bounded and the per-level refinements dominate, so the counted
  // multiply-accumulates grow close to linearly in n.
  const auto count_for = [](std::uint64_t n) {
    const std::uint32_t levels = max_levels(n, 4);
    const ValidatedConfig cfg = validate_config(make(n, 8, 4, 2, levels, 0));
    const FeatureMatrix q = gen_random(n, 8, 91);
    const FeatureMatrix k = gen_random(n, 8, 92);
    const SelectionResult sel = hierarchical_topk(
        build_pyramid(q, 4, levels), build_pyramid(k, 4, levels), cfg);
    // Counts depend only on shapes: the coarsest stage scores every pair of
    // top-level tokens, and each refinement scores K*B candidates per token.
    std::uint64_t expect = std::uint64_t(cfg.level_tokens(levels)) *
                           cfg.level_tokens(levels) * 8;
    for (std::uint32_t l = 1; l < levels; ++l) {
      expect += std::uint64_t(cfg.level_tokens(l)) * (2 * 4) * 8;
    }
    CHECK(sel.mul_accs == expect);
    return sel.mul_accs;
  };
  const std::uint64_t small = count_for(1024);
  const std::uint64_t large = count_for(2048);
  CHECK(double(large) <= 2.2 * double(small));
}

TEST_CASE("selection dump lists every row in canonical form") {
  LevelIndices t0;
  t0.level = 0;
  t0.query_blocks = 2;
  t0.k = 2;
  t0.indices = {0, 3, 1, 2};
  SelectionResult sel;
  sel.per_level = {t0};
  std::ostringstream out;
  dump_selection(sel, out);
  CHECK(out.str() == "level 0 / row 0: 0 3\nlevel 0 / row 1: 1 2\n");
}

TEST_CASE("pyramids shallower than the config are rejected") {
  const ValidatedConfig cfg = validate_config(make(64, 4, 4, 2, 2, 0));
  const FeatureMatrix q = gen_random(64, 4, 13);
  const FeatureMatrix k = gen_random(64, 4, 14);
  const Pyramid shallow_q = build_pyramid(q, 4, 1);
  const Pyramid shallow_k = build_pyramid(k, 4, 1);
  CHECK_THROWS_AS(hierarchical_topk(shallow_q, shallow_k, cfg),
                  ShapeMismatch);
}
