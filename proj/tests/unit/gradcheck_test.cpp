// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "frozen_values.hpp"
#include "invact/gradcheck.hpp"

using namespace invact;

TEST_CASE("quadratic is exact to 1e-9") {
  const auto r = run_gradcheck_target("quadratic", 1e-9);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("exact-backward targets pass at 1e-5") {
  for (const char* t : {"gelu", "silu", "linear", "mlp", "geglu"}) {
    const auto r = run_gradcheck_target(t, 1e-5);
    CAPTURE(t);
    CHECK(r.passed);
  }
}

TEST_CASE("inverted-backward targets deviate by an approximation-sized amount") {
  for (const char* t : {"mlp-bitset", "geglu-bitset"}) {
    const auto r = run_gradcheck_target(t, 1e-5);
    CAPTURE(t);
    CHECK(!r.passed);
    CHECK(r.max_rel_error > 1e-5);
    // The inverted error enters once per activation and is scaled by a weight
    // row; an order of magnitude above the branch bound would mean a real bug.
    CHECK(r.max_rel_error < 10 * frozen::kGeluRight.linf);
  }
}

TEST_CASE("compare_gradients uses max(1, |a|, |n|)") {
  Eigen::VectorXd a(2), n(2);
  a << 100.0, 0.0;
  n << 101.0, 0.5;
  const auto r = compare_gradients(a, n, 1e-3);
  CHECK(r.max_rel_error == doctest::Approx(0.5));
  CHECK(r.worst_index == 1);
  CHECK(!r.passed);
}

TEST_CASE("unknown target") { CHECK_THROWS(run_gradcheck_target("nope", 1e-5)); }
