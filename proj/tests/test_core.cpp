// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include <doctest.h>

#include "llsa/config.hpp"
#include "llsa/errors.hpp"

using namespace llsa;

namespace {

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

TEST_CASE("max_levels is the deepest level with B^(L+1) <= n") {
  CHECK(max_levels(65536, 16) == 3);  // 16^4 = 65536
  CHECK(max_levels(65535, 16) == 2);
  CHECK(max_levels(16384, 16) == 2);
  CHECK(max_levels(256, 4) == 3);  // 4^4 = 256
  CHECK(max_levels(16, 4) == 1);
  CHECK(max_levels(8, 4) == 0);  // only one pooling step would overshoot
  CHECK(max_levels(4, 2) == 1);
  CHECK(max_levels(1, 2) == 0);
}

TEST_CASE("minimal and typical configs validate") {
  const ValidatedConfig tiny = validate_config(make(4, 1, 2, 1, 1, 0));
  CHECK(tiny.n() == 4);
  CHECK(tiny.fine_blocks() == 2);
  CHECK(tiny.level_tokens(1) == 2);
  CHECK(tiny.level_blocks(0) == 2);

  const ValidatedConfig big = validate_config(make(16384, 64, 16, 8, 2, 2));
  CHECK(big.level_tokens(1) == 1024);
  CHECK(big.level_tokens(2) == 64);
  CHECK(big.level_blocks(2) == 4);
  CHECK(big.pow_block(0) == 1);
  CHECK(big.pow_block(2) == 256);
  CHECK(big.pow_block(3) == 4096);
  CHECK(big.weight(2) == real(256));
}

TEST_CASE("softmax scale defaults to 1/sqrt(d) and honors overrides") {
  const ValidatedConfig byd = validate_config(make(64, 16, 4, 2, 1, 0));
  CHECK(byd.scale() == doctest::Approx(0.25).epsilon(1e-12));

  LLSAConfig cfg = make(64, 16, 4, 2, 1, 0);
  cfg.softmax_scale = real(0.125);
  CHECK(validate_config(cfg).scale() == real(0.125));
}

TEST_CASE("malformed dimensions raise ConfigError") {
  CHECK_THROWS_AS(validate_config(make(0, 4, 4, 1, 1, 0)), ConfigError);
  CHECK_THROWS_AS(validate_config(make(64, 0, 4, 1, 1, 0)), ConfigError);
  CHECK_THROWS_AS(validate_config(make(64, 4, 1, 1, 1, 0)), ConfigError);
  CHECK_THROWS_AS(validate_config(make(64, 4, 0, 1, 1, 0)), ConfigError);

  // Sequence indices must stay in 32-bit range.
  CHECK_THROWS_AS(validate_config(make(1ull << 33, 4, 16, 2, 1, 0)),
                  ConfigError);

  LLSAConfig bad_scale = make(64, 4, 4, 1, 1, 0);
  bad_scale.softmax_scale = real(-1);
  CHECK_THROWS_AS(validate_config(bad_scale), ConfigError);
  bad_scale.softmax_scale = std::numeric_limits<real>::quiet_NaN();
  CHECK_THROWS_AS(validate_config(bad_scale), ConfigError);
}

TEST_CASE("level bounds raise LevelError") {
  CHECK_THROWS_AS(validate_config(make(64, 4, 4, 1, 0, 0)), LevelError);
  // max_levels(64, 4) = 2, so 3 pooling levels overshoot.
  CHECK_THROWS_AS(validate_config(make(64, 4, 4, 1, 3, 0)), LevelError);
  // Enrichment cannot exceed the pyramid depth.
  CHECK_THROWS_AS(validate_config(make(64, 4, 4, 1, 2, 3)), LevelError);
  CHECK_NOTHROW(validate_config(make(64, 4, 4, 1, 2, 2)));
}

TEST_CASE("non-divisible sequence lengths raise DivisibilityError") {
  // max_levels(100, 3) = 3; levels = 2 is admissible but 9 does not divide
  // 100.
  CHECK_THROWS_AS(validate_config(make(100, 4, 3, 1, 2, 0)),
                  DivisibilityError);
  CHECK_NOTHROW(validate_config(make(99, 4, 3, 1, 2, 0)));
}

TEST_CASE("top_k bound is the coarsest candidate count") {
  // N = 4096, B = 16, L = 2: the coarsest stage ranks N/B^L = 16 tokens.
  CHECK_NOTHROW(validate_config(make(4096, 4, 16, 16, 2, 0)));
  CHECK_THROWS_AS(validate_config(make(4096, 4, 16, 17, 2, 0)), TopKError);
  CHECK_THROWS_AS(validate_config(make(4096, 4, 16, 0, 2, 0)), TopKError);
  // Top-all at the coarsest stage is the dense-coverage configuration.
  CHECK_NOTHROW(validate_config(make(256, 4, 4, 64, 1, 0)));
  CHECK_THROWS_AS(validate_config(make(256, 4, 4, 65, 1, 0)), TopKError);
}

TEST_CASE("effective_block_count composes selected and coarsest entries") {
  // K per enriched level below the top, plus every coarsest block when
  // enrichment reaches the top: 8*2 + 16384/16^3 = 20.
  CHECK(effective_block_count(validate_config(make(16384, 64, 16, 8, 2, 2))) ==
        20);
  // Enrichment stopping below the top contributes K per level only.
  CHECK(effective_block_count(validate_config(make(16384, 64, 16, 8, 2, 1))) ==
        16);
  CHECK(effective_block_count(validate_config(make(16384, 64, 16, 8, 2, 0))) ==
        8);
  // 2*2 + 256/64 = 8.
  CHECK(effective_block_count(validate_config(make(256, 16, 4, 2, 2, 2))) ==
        8);
  // Single level, full enrichment: K + n/B^2.
  CHECK(effective_block_count(validate_config(make(64, 4, 4, 2, 1, 1))) ==
        2 + 4);
}

TEST_CASE("validation is total: every config validates or throws one typed "
          "error") {
  int validated = 0;
  int rejected = 0;
  for (std::uint64_t n : {0ull, 1ull, 4ull, 63ull, 64ull, 100ull, 4096ull}) {
    for (std::uint32_t d : {0u, 1u, 16u}) {
      for (std::uint32_t b : {0u, 1u, 2u, 4u, 16u}) {
        for (std::uint32_t k : {0u, 1u, 2u, 64u}) {
          for (std::uint32_t levels : {0u, 1u, 2u, 5u}) {
            for (std::uint32_t enrich : {0u, 1u, 2u, 6u}) {
              try {
                (void)validate_config(make(n, d, b, k, levels, enrich));
                ++validated;
              } catch (const ConfigError&) {
                ++rejected;
              } catch (const LevelError&) {
                ++rejected;
              } catch (const DivisibilityError&) {
                ++rejected;
              } catch (const TopKError&) {
                ++rejected;
              }
            }
          }
        }
      }
    }
  }
  CHECK(validated > 0);
  CHECK(validated + rejected == 7 * 3 * 5 * 4 * 4 * 4);
}

TEST_CASE("reweight mode names round-trip") {
  CHECK(std::string(to_string(ReweightMode::ScaleKV)) == "scalekv");
  CHECK(std::string(to_string(ReweightMode::LogitBias)) == "logitbias");
}
