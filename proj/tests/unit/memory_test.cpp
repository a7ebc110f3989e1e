// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>
#include <stdexcept>

#include <doctest.h>

#include "frozen_values.hpp"
#include "invact/memory.hpp"

using namespace invact;

TEST_CASE("MLP block bytes") {
  const std::uint64_t d = 1024;
  for (std::uint64_t n : {1ull, 3ull, 1024ull, 32768ull}) {
    const auto est = estimate_memory(presets::mlp_block(d, 4, n), Strategy::Bitset, ElementFormat::Binary16);
    CHECK(est.baseline_total == (d + 4 * d + 4 * d) * n * 2);
    CHECK(est.invact_total == (d + 4 * d) * n * 2 + (4 * d * n + 7) / 8);
    CHECK(est.warnings.empty());
  }
}

TEST_CASE("sign-bit and precision-bit activations add nothing") {
  for (auto s : {Strategy::SignBit, Strategy::PrecisionBit}) {
    const auto est = estimate_memory(presets::activation_linear(64, 10), s, ElementFormat::Binary32);
    CHECK(est.per_layer.at(0).invact_bytes == 0);
    CHECK(est.invact_total == 64 * 10 * 4);
  }
  const auto base = estimate_memory(presets::activation_linear(64, 10), Strategy::Baseline, ElementFormat::Binary32);
  CHECK(base.invact_total == base.baseline_total);
}

TEST_CASE("no saving when the consumer keeps nothing") {
  for (const auto& block : {presets::activation_into_add(16, 16), presets::plain_activation(256)}) {
    const auto est = estimate_memory(block, Strategy::Bitset, ElementFormat::Binary16);
    CHECK(est.saving == 0.0);
    CHECK(est.invact_total == est.baseline_total);
    REQUIRE(est.warnings.size() == 1);
    CHECK(est.warnings[0].find("no memory is saved") != std::string::npos);
  }
}

TEST_CASE("GeGLU shares the gate output with the multiply") {
  const std::uint64_t d = 8, h = 32, n = 5;
  const auto est = estimate_memory(presets::geglu_block(d, h, n), Strategy::Bitset, ElementFormat::Binary32);
  CHECK(est.baseline_total == (d + h + h + h) * n * 4);
  CHECK(est.invact_total == (d + h + h) * n * 4 + (h * n + 7) / 8);
}

TEST_CASE("transformer preset saving") {
  const auto est = estimate_memory(presets::transformer(12, 768, 12, 4, 1024), Strategy::Bitset, ElementFormat::Binary16);
  CHECK(est.saving == doctest::Approx(frozen::kTransformerSaving).epsilon(1e-15));
  CHECK(est.baseline_total % 12 == 0);
}

TEST_CASE("memory spec records") {
  KeyValueRecord rec;
  rec.set("block", std::string("mlp"));
  rec.set("d_model", 16.0);
  rec.set("tokens", 4.0);
  const auto b = block_from_record(rec);
  CHECK(b.elements("h") == 4 * 16 * 4);
  KeyValueRecord bad;
  bad.set("block", std::string("conv"));
  CHECK_THROWS_AS(block_from_record(bad), std::invalid_argument);
  CHECK_THROWS_AS(b.elements("nope"), std::invalid_argument);
}
