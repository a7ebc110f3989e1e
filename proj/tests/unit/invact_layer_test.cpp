// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "frozen_values.hpp"
#include "invact/invact_layer.hpp"

using namespace invact;

namespace {

template <typename T>
Tensor<T> random_tensor(Eigen::Index n, std::uint64_t seed, double scale = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  typename Tensor<T>::Array a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = from_double<T>(std::clamp(dist(rng), -12.0, 12.0));
  return Tensor<T>(std::move(a));
}

template <typename T>
Tensor<T> ones(Eigen::Index n) {
  return Tensor<T>(Tensor<T>::Array::Constant(n, from_double<T>(1.0)));
}

bool bitset_bit(const SavedActivation<float>& ctx, std::size_t i) {
  return std::get<SavedActivation<float>::Bitset>(ctx.payload()).indicator.test(i);
}

}  // namespace

TEST_CASE("Bitset forward records x < T") {
  const double t = geometry(ActivationKind::Gelu).threshold;
  typename Tensor<float>::Array xs(3);
  xs << 0.0f, static_cast<float>(t - 1), static_cast<float>(t + 1);
  const auto [ys, ctx] = forward(ActivationKind::Gelu, Strategy::Bitset, Tensor<float>(xs));
  CHECK(ys.values()[0] == 0.0f);
  CHECK(!bitset_bit(ctx, 0));
  CHECK(bitset_bit(ctx, 1));
  CHECK(!bitset_bit(ctx, 2));
  CHECK(std::get<SavedActivation<float>::Bitset>(ctx.payload()).output.shares_storage_with(ys));
}

TEST_CASE("extra bytes per strategy") {
  const auto xs = random_tensor<float>(1024, 1);
  CHECK(forward(ActivationKind::Gelu, Strategy::Bitset, xs).second.extra_bytes() == 128);
  CHECK(forward(ActivationKind::Gelu, Strategy::Baseline, xs).second.extra_bytes() == 4096);
  CHECK(forward(ActivationKind::Gelu, Strategy::SignBit, xs).second.extra_bytes() == 0);
  CHECK(forward(ActivationKind::Gelu, Strategy::PrecisionBit, xs).second.extra_bytes() == 0);
  for (Eigen::Index n : {1, 7, 8, 9, 1000}) {
    const auto t = random_tensor<float>(n, 2);
    CHECK(forward(ActivationKind::Silu, Strategy::Bitset, t).second.extra_bytes() <
          forward(ActivationKind::Silu, Strategy::Baseline, t).second.extra_bytes());
  }
}

TEST_CASE_TEMPLATE("forward purity", T, float, Eigen::half) {
  const auto xs = random_tensor<T>(5000, 3);
  for (auto kind : {ActivationKind::Gelu, ActivationKind::Silu}) {
    const auto bitset = forward(kind, Strategy::Bitset, xs).first;
    const auto sign = forward(kind, Strategy::SignBit, xs).first;
    const auto prec = forward(kind, Strategy::PrecisionBit, xs).first;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const T direct = from_double<T>(eval_forward(kind, to_double(xs.values()[i])));
      REQUIRE(to_bits(bitset.values()[i]) == to_bits(direct));
      REQUIRE(to_bits(sign.values()[i]) == to_bits(direct));
      REQUIRE(std::fabs(to_double(prec.values()[i]) - to_double(direct)) <= ulp(direct));
    }
  }
}

TEST_CASE("Baseline backward is the exact derivative") {
  const auto xs = random_tensor<double>(2000, 4);
  for (auto kind : {ActivationKind::Gelu, ActivationKind::Silu}) {
    const auto ctx = forward(kind, Strategy::Baseline, xs).second;
    const auto dx = backward(kind, ctx, ones<double>(xs.size()));
    for (Eigen::Index i = 0; i < xs.size(); ++i) REQUIRE(dx.values()[i] == eval_derivative(kind, xs.values()[i]));
  }
}

TEST_CASE("GELU backward at x = 0") {
  typename Tensor<double>::Array x(1);
  x << 0.0;
  const auto ctx = forward(ActivationKind::Gelu, Strategy::Bitset, Tensor<double>(x)).second;
  const double dx = backward(ActivationKind::Gelu, ctx, ones<double>(1)).values()[0];
  CHECK(std::fabs(dx - 0.5) <= frozen::kGeluRight.linf);
}

// q has unbounded slope at the junction and sign-bit storage keeps y only to
// the precision of |y - C|, so agreement is asserted on what each strategy
// hands to q: the same indicator, and y within 2 ulps of the format.
TEST_CASE_TEMPLATE("strategies reconstruct the same q inputs", T, double, float, Eigen::half) {
  const auto xs = random_tensor<T>(20000, 6);
  for (auto kind : {ActivationKind::Gelu, ActivationKind::Silu}) {
    const auto& geo = geometry(kind);
    const auto bits = forward(kind, Strategy::Bitset, xs).second;
    const auto sign = forward(kind, Strategy::SignBit, xs).second;
    const auto prec = forward(kind, Strategy::PrecisionBit, xs).second;
    const auto& b = std::get<typename SavedActivation<T>::Bitset>(bits.payload());
    const auto& e = std::get<typename SavedActivation<T>::SignBit>(sign.payload()).encoded.values();
    const auto& p = std::get<typename SavedActivation<T>::PrecisionBit>(prec.payload()).output.values();
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      const bool s = to_double(xs.values()[i]) < geo.threshold;
      REQUIRE(b.indicator.test(k) == s);
      REQUIRE(sign_bit(e[i]) == s);
      REQUIRE(low_bit(p[i]) == s);
      const T y = b.output.values()[i];
      const double y_sign = std::fabs(to_double(e[i])) + geo.minimum;
      REQUIRE(std::fabs(y_sign - to_double(y)) <= 2 * std::fmax(ulp(e[i]), ulp(y)));
      REQUIRE(std::fabs(to_double(p[i]) - to_double(y)) <= 2 * ulp(y));
    }
  }
}

TEST_CASE("every strategy stays within the frozen bound of the exact backward") {
  const auto xs = random_tensor<double>(50000, 6);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  Tensor<double>::Array dy_a(xs.size());
  for (auto& v : dy_a) v = nd(rng);
  const Tensor<double> dys(dy_a);
  for (auto kind : {ActivationKind::Gelu, ActivationKind::Silu}) {
    const double t = geometry(kind).threshold;
    const auto base = backward(kind, forward(kind, Strategy::Baseline, xs).second, dys);
    for (auto st : {Strategy::Bitset, Strategy::SignBit, Strategy::PrecisionBit}) {
      const auto got = backward(kind, forward(kind, st, xs).second, dys);
      for (Eigen::Index i = 0; i < xs.size(); ++i) {
        const double linf = frozen::bound(kind, xs.values()[i] < t ? Branch::Left : Branch::Right).linf;
        // 1e-3: the frozen sup is taken on a grid that starts 1e-9 above C.
        REQUIRE(std::fabs(got.values()[i] - base.values()[i]) <= linf * std::fabs(dy_a[i]) * (1 + 1e-3));
      }
    }
  }
}

TEST_CASE("backward rejects a mismatched gradient") {
  const auto xs = random_tensor<float>(10, 1);
  const auto ctx = forward(ActivationKind::Gelu, Strategy::Bitset, xs).second;
  CHECK_THROWS_AS(backward(ActivationKind::Gelu, ctx, ones<float>(9)), std::invalid_argument);
}

TEST_CASE("threaded kernels match single-threaded ones") {
  const auto xs = random_tensor<float>(100003, 12);
  const InvertedActivation<float> one(ActivationKind::Gelu, Strategy::Bitset, 1);
  const InvertedActivation<float> four(ActivationKind::Gelu, Strategy::Bitset, 4);
  const auto a = one.forward(xs);
  const auto b = four.forward(xs);
  CHECK((a.first.values() == b.first.values()).all());
  CHECK(a.second.extra_bytes() == b.second.extra_bytes());
  CHECK(std::get<SavedActivation<float>::Bitset>(a.second.payload()).indicator ==
        std::get<SavedActivation<float>::Bitset>(b.second.payload()).indicator);
  const auto dy = ones<float>(xs.size());
  CHECK((one.backward(a.second, dy).values() == four.backward(b.second, dy).values()).all());
}

TEST_CASE("sign-bit fused linear keeps only the encoded tensor") {
  using L = SignBitLinear<double>;
  const auto xs = Tensor<double>(Shape{3, 2}, random_tensor<double>(6, 13).values());
  L::Matrix w(2, 2);
  w << 1, 2, 3, 4;
  L::Vector b(2);
  b << 0.5, -0.5;
  L layer(ActivationKind::Silu);
  const auto y = layer.forward(xs, w, b);
  CHECK(layer.saved().strategy() == Strategy::SignBit);
  CHECK(layer.saved().extra_bytes() == 0);
  const auto g = layer.backward(ones<double>(6));
  CHECK(g.bias(0) == doctest::Approx(3.0));
  // d/dW of sum(f(X) W + b) is the column sums of f(X).
  double col = 0;
  for (int r = 0; r < 3; ++r) col += eval_forward(ActivationKind::Silu, xs.values()[r * 2]);
  CHECK(g.weight(0, 0) == doctest::Approx(col).epsilon(1e-12));
  CHECK(y.size() == 6);
}
