// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <tuple>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <doctest.h>

#include "frozen_values.hpp"
#include "invact/quant_baseline.hpp"

using namespace invact;

namespace {

const QuantizerTable& cached(ActivationKind kind, int bits, InputMeasure measure) {
  static std::map<std::tuple<int, int, int>, QuantizerTable> tables;
  const auto key = std::make_tuple(static_cast<int>(kind), bits, static_cast<int>(measure));
  auto it = tables.find(key);
  if (it == tables.end()) it = tables.emplace(key, build_quantizer(kind, bits, measure)).first;
  return it->second;
}

}  // namespace

TEST_CASE("1-bit levels match the independent Lloyd-Max") {
  struct Case {
    ActivationKind kind;
    InputMeasure measure;
    const double* levels;
  };
  const Case cases[] = {
      {ActivationKind::Gelu, InputMeasure::Uniform, frozen::kGeluUniform1BitLevels},
      {ActivationKind::Gelu, InputMeasure::StandardNormal, frozen::kGeluNormal1BitLevels},
      {ActivationKind::Silu, InputMeasure::Uniform, frozen::kSiluUniform1BitLevels},
      {ActivationKind::Silu, InputMeasure::StandardNormal, frozen::kSiluNormal1BitLevels},
  };
  for (const auto& c : cases) {
    const auto& t = cached(c.kind, 1, c.measure);
    REQUIRE(t.size() == 2);
    CHECK(std::fabs(t.levels[0] - c.levels[0]) < 1e-9);
    CHECK(std::fabs(t.levels[1] - c.levels[1]) < 1e-9);
    CHECK(t.boundaries[0] == doctest::Approx(0.5 * (t.levels[0] + t.levels[1])).epsilon(1e-15));
  }
}

TEST_CASE("8-bit errors match the independent Lloyd-Max") {
  const auto& g = cached(ActivationKind::Gelu, 8, InputMeasure::Uniform);
  const auto eg = quantizer_error(g);
  CHECK(eg.l2 == doctest::Approx(frozen::kGeluUniform8Bit.l2).epsilon(1e-6));
  CHECK(eg.linf == doctest::Approx(frozen::kGeluUniform8Bit.linf).epsilon(1e-6));
  const auto& s = cached(ActivationKind::Silu, 8, InputMeasure::StandardNormal);
  const auto es = quantizer_error(s);
  CHECK(es.l2 == doctest::Approx(frozen::kSiluNormal8Bit.l2).epsilon(1e-6));
  CHECK(es.linf == doctest::Approx(frozen::kSiluNormal8Bit.linf).epsilon(1e-6));
}

TEST_CASE("tables are fixed points with increasing boundaries") {
  for (int bits : {1, 3, 8}) {
    const auto& t = cached(ActivationKind::Silu, bits, InputMeasure::Uniform);
    CHECK(t.size() == (std::size_t{1} << bits));
    CHECK(std::adjacent_find(t.boundaries.begin(), t.boundaries.end(), std::greater_equal<>()) == t.boundaries.end());
    const auto r = fixed_point_residual(t);
    CHECK(r.centroid <= 1e-8);
    CHECK(r.nearest_neighbour <= 1e-8);
  }
}

TEST_CASE("errors are non-increasing in k") {
  for (auto kind : {ActivationKind::Gelu, ActivationKind::Silu}) {
    for (auto m : {InputMeasure::Uniform, InputMeasure::StandardNormal}) {
      double l2 = INFINITY, linf = INFINITY;
      for (int k = 1; k <= 8; ++k) {
        const auto e = quantizer_error(cached(kind, k, m));
        CAPTURE(k);
        CHECK(e.l2 <= l2 * (1 + 1e-12));
        CHECK(e.linf <= linf * (1 + 1e-12));
        l2 = e.l2;
        linf = e.linf;
      }
    }
  }
}

TEST_CASE("k=1 error is at least ten times the InvAct error") {
  const double g1 = quantizer_error(cached(ActivationKind::Gelu, 1, InputMeasure::Uniform)).l2;
  CHECK(g1 >= 10 * frozen::kGeluInvactUniformL2);
  const double s1 = quantizer_error(cached(ActivationKind::Silu, 1, InputMeasure::StandardNormal)).l2;
  CHECK(s1 >= 10 * frozen::kSiluInvactNormalL2);
}

TEST_CASE("8-bit backward stays within the cell bound") {
  const auto& t = cached(ActivationKind::Gelu, 8, InputMeasure::Uniform);
  const double width = (t.levels.back() - t.levels.front()) / 2;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dist(-12, 12);
  typename Tensor<double>::Array x(10000);
  for (auto& v : x) v = dist(rng);
  const auto codes = encode_codes<double>(t, {x.data(), static_cast<std::size_t>(x.size())});
  const auto dx = quantized_backward(t, codes, Tensor<double>(Tensor<double>::Array::Ones(x.size())));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = eval_derivative(ActivationKind::Gelu, x[i]);
    const std::size_t code = codes[static_cast<std::size_t>(i)];
    CHECK(std::fabs(dx.values()[i] - d) <= width);
    // The code's cell contains the derivative it was computed from.
    if (code > 0) CHECK(d >= t.boundaries[code - 1]);
    if (code + 1 < t.size()) CHECK(d < t.boundaries[code]);
  }
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(build_quantizer(ActivationKind::Gelu, 0, InputMeasure::Uniform), std::invalid_argument);
  CHECK_THROWS_AS(build_quantizer(ActivationKind::Gelu, 9, InputMeasure::Uniform), std::invalid_argument);
  const auto& t = cached(ActivationKind::Gelu, 1, InputMeasure::Uniform);
  const std::vector<std::uint8_t> codes{0, 2};
  CHECK_THROWS_AS(quantized_backward(t, codes, Tensor<double>(Tensor<double>::Array::Ones(2))), std::invalid_argument);
  CHECK_THROWS_AS(quantized_backward(t, codes, Tensor<double>(Tensor<double>::Array::Ones(3))), std::invalid_argument);
}

TEST_CASE("quantizer files round-trip") {
  const auto& t = cached(ActivationKind::Silu, 3, InputMeasure::StandardNormal);
  std::stringstream io;
  write_quantizer(io, t);
  const auto back = read_quantizer(io);
  CHECK(back.levels == t.levels);
  CHECK(back.boundaries == t.boundaries);
  CHECK(back.kind == t.kind);
  CHECK(back.measure == t.measure);
  CHECK(back.bits == 3);
}
