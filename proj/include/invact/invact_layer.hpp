// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "invact/activation_math.hpp"
#include "invact/indicator_codec.hpp"
#include "invact/tensor.hpp"

namespace invact {

// What a pointwise activation keeps for its backward pass.
//   Baseline      the input x; backward uses the exact f'(x)
//   Bitset        the output y, shared with the consumer, plus one packed bit
//   SignBit       y - C with the indicator in the sign bit
//   PrecisionBit  y with the indicator in the lowest mantissa bit; this
//                 modified y is also what the layer returns
enum class Strategy { Baseline, Bitset, SignBit, PrecisionBit };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

enum class ElementFormat { Binary16, Binary32, Binary64 };

std::string_view to_string(ElementFormat format);
ElementFormat parse_element_format(std::string_view text);
std::size_t format_width(ElementFormat format);

template <typename T>
constexpr ElementFormat element_format_of() {
  if constexpr (std::is_same_v<T, Eigen::half>) {
    return ElementFormat::Binary16;
  } else if constexpr (std::is_same_v<T, float>) {
    return ElementFormat::Binary32;
  } else {
    static_assert(std::is_same_v<T, double>, "unsupported element type");
    return ElementFormat::Binary64;
  }
}

template <typename T>
class SavedActivation {
 public:
  struct Baseline {
    Tensor<T> input;
  };
  struct Bitset {
    Tensor<T> output;
    PackedBits indicator;
  };
  struct SignBit {
    Tensor<T> encoded;
  };
  struct PrecisionBit {
    Tensor<T> output;
  };
  using Payload = std::variant<Baseline, Bitset, SignBit, PrecisionBit>;

  explicit SavedActivation(Payload payload) : payload_(std::move(payload)) {}

  const Payload& payload() const { return payload_; }
  Strategy strategy() const { return static_cast<Strategy>(payload_.index()); }
  ElementFormat format() const { return element_format_of<T>(); }

  const Tensor<T>& tensor() const {
    return std::visit([](const auto& p) -> const Tensor<T>& {
      using P = std::decay_t<decltype(p)>;
      if constexpr (std::is_same_v<P, Baseline>) {
        return p.input;
      } else if constexpr (std::is_same_v<P, SignBit>) {
        return p.encoded;
      } else {
        return p.output;
      }
    }, payload_);
  }

  std::size_t size() const { return static_cast<std::size_t>(tensor().size()); }
  const Shape& shape() const { return tensor().shape(); }

  // Bytes held beyond the tensor the following layer already saves.
  std::size_t extra_bytes() const {
    switch (strategy()) {
      case Strategy::Baseline: return size() * sizeof(T);
      case Strategy::Bitset: return std::get<Bitset>(payload_).indicator.byte_size();
      default: return 0;
    }
  }

 private:
  Payload payload_;
};

namespace detail {

// Splits [0, n) into per-thread ranges whose starts are multiples of 8 so
// that packed indicator bytes are never shared between threads.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 4096) {
    fn(std::size_t{0}, n);
    return;
  }
  const auto count = static_cast<std::size_t>(threads);
  const std::size_t chunk = ((n + count - 1) / count + 7) / 8 * 8;
  std::vector<std::jthread> pool;
  for (std::size_t begin = chunk; begin < n; begin += chunk) {
    pool.emplace_back([&fn, begin, end = std::min(n, begin + chunk)] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

}  // namespace detail

// Branch-free inner loops on contiguous spans. `begin` must be a multiple of
// 8 for the kernels that touch packed indicators.
namespace kernels {

template <typename T>
void forward_plain(ActivationKind kind, std::span<const T> xs, std::span<T> ys, std::size_t begin, std::size_t end) {
  if (kind == ActivationKind::Gelu) {
    for (std::size_t i = begin; i < end; ++i) ys[i] = from_double<T>(detail::gelu(to_double(xs[i])));
  } else {
    for (std::size_t i = begin; i < end; ++i) ys[i] = from_double<T>(detail::silu(to_double(xs[i])));
  }
}

template <typename T>
void forward_bitset(ActivationKind kind, std::span<const T> xs, std::span<T> ys, std::uint8_t* bits,
                    std::size_t begin, std::size_t end) {
  const double threshold = geometry(kind).threshold;
  for (std::size_t i = begin; i < end; i += 8) {
    const std::size_t stop = std::min(end, i + 8);
    unsigned byte = 0;
    for (std::size_t j = i; j < stop; ++j) {
      const double x = to_double(xs[j]);
      ys[j] = from_double<T>(eval_forward(kind, x));
      byte |= static_cast<unsigned>(x < threshold) << (j - i);
    }
    bits[i >> 3] = static_cast<std::uint8_t>(byte);
  }
}

template <typename T>
void forward_sign_bit(ActivationKind kind, std::span<const T> xs, std::span<T> ys, std::span<T> encoded,
                      std::size_t begin, std::size_t end) {
  const auto& geo = geometry(kind);
  for (std::size_t i = begin; i < end; ++i) {
    const double x = to_double(xs[i]);
    const double y = eval_forward(kind, x);
    ys[i] = from_double<T>(y);
    encoded[i] = with_sign_bit(from_double<T>(std::fmax(y - geo.minimum, 0.0)), x < geo.threshold);
  }
}

template <typename T>
void forward_precision_bit(ActivationKind kind, std::span<const T> xs, std::span<T> ys, std::size_t begin,
                           std::size_t end) {
  const double threshold = geometry(kind).threshold;
  for (std::size_t i = begin; i < end; ++i) {
    const double x = to_double(xs[i]);
    ys[i] = with_low_bit(from_double<T>(eval_forward(kind, x)), x < threshold);
  }
}

template <typename T>
void backward_exact(ActivationKind kind, std::span<const T> xs, std::span<const T> dys, std::span<T> dxs,
                    std::size_t begin, std::size_t end) {
  if (kind == ActivationKind::Gelu) {
    for (std::size_t i = begin; i < end; ++i)
      dxs[i] = from_double<T>(to_double(dys[i]) * detail::gelu_derivative(to_double(xs[i])));
  } else {
    for (std::size_t i = begin; i < end; ++i)
      dxs[i] = from_double<T>(to_double(dys[i]) * detail::silu_derivative(to_double(xs[i])));
  }
}

template <typename T>
void backward_bitset(const ApproximationKernel& q, std::span<const T> ys, const std::uint8_t* bits,
                     std::span<const T> dys, std::span<T> dxs, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    const bool left = (bits[i >> 3] >> (i & 7)) & 1u;
    dxs[i] = from_double<T>(to_double(dys[i]) * q(to_double(ys[i]), left));
  }
}

template <typename T>
void backward_sign_bit(const ApproximationKernel& q, double c_min, std::span<const T> encoded,
                       std::span<const T> dys, std::span<T> dxs, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    const double e = to_double(encoded[i]);
    dxs[i] = from_double<T>(to_double(dys[i]) * q(std::fabs(e) + c_min, sign_bit(encoded[i])));
  }
}

template <typename T>
void backward_precision_bit(const ApproximationKernel& q, std::span<const T> ys, std::span<const T> dys,
                            std::span<T> dxs, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    dxs[i] = from_double<T>(to_double(dys[i]) * q(to_double(ys[i]), low_bit(ys[i])));
  }
}

}  // namespace kernels

template <typename T>
std::span<T> mutable_span(Eigen::Array<T, Eigen::Dynamic, 1>& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

// A pointwise GELU/SiLU layer with a selectable saving strategy.
template <typename T>
class InvertedActivation {
 public:
  using Array = typename Tensor<T>::Array;

  InvertedActivation(ActivationKind kind, Strategy strategy, const Approximation& approx, int threads = 1)
      : kind_(kind), strategy_(strategy), kernel_(approx), threads_(threads) {
    if (approx.left.kind != kind) throw std::invalid_argument("InvertedActivation: approximation kind mismatch");
  }

  InvertedActivation(ActivationKind kind, Strategy strategy, int threads = 1)
      : InvertedActivation(kind, strategy, default_approximation(kind), threads) {}

  ActivationKind kind() const { return kind_; }
  Strategy strategy() const { return strategy_; }
  const ApproximationKernel& kernel() const { return kernel_; }

  // ys[i] = f(xs[i]); for Bitset the saved context holds `ys` itself.
  std::pair<Tensor<T>, SavedActivation<T>> forward(const Tensor<T>& xs) const {
    const auto n = static_cast<std::size_t>(xs.size());
    Array ys(xs.size());
    auto y_span = mutable_span(ys);
    const auto x_span = xs.span();
    using Saved = SavedActivation<T>;

    switch (strategy_) {
      case Strategy::Baseline: {
        detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
          kernels::forward_plain<T>(kind_, x_span, y_span, b, e);
        });
        return {Tensor<T>(xs.shape(), std::move(ys)), Saved(typename Saved::Baseline{xs})};
      }
      case Strategy::Bitset: {
        PackedBits bits(n);
        std::uint8_t* raw = bits.data();
        detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
          kernels::forward_bitset<T>(kind_, x_span, y_span, raw, b, e);
        });
        Tensor<T> out(xs.shape(), std::move(ys));
        return {out, Saved(typename Saved::Bitset{out, std::move(bits)})};
      }
      case Strategy::SignBit: {
        if constexpr (IndicatorFormat<T>) {
          Array encoded(xs.size());
          auto e_span = mutable_span(encoded);
          detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
            kernels::forward_sign_bit<T>(kind_, x_span, y_span, e_span, b, e);
          });
          return {Tensor<T>(xs.shape(), std::move(ys)),
                  Saved(typename Saved::SignBit{Tensor<T>(xs.shape(), std::move(encoded))})};
        }
        break;
      }
      case Strategy::PrecisionBit: {
        if constexpr (IndicatorFormat<T>) {
          detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
            kernels::forward_precision_bit<T>(kind_, x_span, y_span, b, e);
          });
          Tensor<T> out(xs.shape(), std::move(ys));
          return {out, Saved(typename Saved::PrecisionBit{out})};
        }
        break;
      }
    }
    throw std::invalid_argument("InvertedActivation: strategy not supported for this element type");
  }

  // dxs[i] = dys[i] * f'(x_i), with f'(x_i) reconstructed from the context.
  Tensor<T> backward(const SavedActivation<T>& ctx, const Tensor<T>& dys) const {
    if (ctx.size() != static_cast<std::size_t>(dys.size()) || ctx.shape() != dys.shape()) {
      throw std::invalid_argument("InvertedActivation::backward: gradient shape does not match saved context");
    }
    const auto n = ctx.size();
    Array dxs(dys.size());
    auto dx_span = mutable_span(dxs);
    const auto dy_span = dys.span();

    std::visit([&](const auto& p) {
      using P = std::decay_t<decltype(p)>;
      using Saved = SavedActivation<T>;
      if constexpr (std::is_same_v<P, typename Saved::Baseline>) {
        const auto xs = p.input.span();
        detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
          kernels::backward_exact<T>(kind_, xs, dy_span, dx_span, b, e);
        });
      } else if constexpr (std::is_same_v<P, typename Saved::Bitset>) {
        const auto ys = p.output.span();
        const std::uint8_t* raw = p.indicator.data();
        detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
          kernels::backward_bitset<T>(kernel_, ys, raw, dy_span, dx_span, b, e);
        });
      } else if constexpr (std::is_same_v<P, typename Saved::SignBit>) {
        if constexpr (IndicatorFormat<T>) {
          const auto enc = p.encoded.span();
          const double c_min = geometry(kind_).minimum;
          detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
            kernels::backward_sign_bit<T>(kernel_, c_min, enc, dy_span, dx_span, b, e);
          });
        }
      } else {
        if constexpr (IndicatorFormat<T>) {
          const auto ys = p.output.span();
          detail::parallel_for(n, threads_, [&](std::size_t b, std::size_t e) {
            kernels::backward_precision_bit<T>(kernel_, ys, dy_span, dx_span, b, e);
          });
        }
      }
    }, ctx.payload());
    return Tensor<T>(dys.shape(), std::move(dxs));
  }

 private:
  ActivationKind kind_;
  Strategy strategy_;
  ApproximationKernel kernel_;
  int threads_;
};

template <typename T>
std::pair<Tensor<T>, SavedActivation<T>> forward(ActivationKind kind, Strategy strategy, const Tensor<T>& xs) {
  return InvertedActivation<T>(kind, strategy).forward(xs);
}

template <typename T>
Tensor<T> backward(ActivationKind kind, const SavedActivation<T>& ctx, const Tensor<T>& dys) {
  return InvertedActivation<T>(kind, ctx.strategy()).backward(ctx, dys);
}

// Output reconstructed from a sign-bit context: |e| + C.
template <IndicatorFormat T>
Tensor<T> decode_output(ActivationKind kind, const SavedActivation<T>& ctx) {
  const auto& p = std::get<typename SavedActivation<T>::SignBit>(ctx.payload());
  const double c_min = geometry(kind).minimum;
  typename Tensor<T>::Array ys = p.encoded.values().unaryExpr(
      [c_min](T e) { return from_double<T>(std::fabs(to_double(e)) + c_min); });
  return Tensor<T>(p.encoded.shape(), std::move(ys));
}

// The sign-bit strategy only saves memory when the consumer adopts the
// encoded tensor as its own saved input, so it is offered fused with the
// consumer. `consumer` sees the exact output ys, which is released once it
// returns; only the encoded tensor survives in the context.
template <IndicatorFormat T, typename Consumer>
auto forward_fused_sign_bit(ActivationKind kind, const Tensor<T>& xs, Consumer&& consumer) {
  auto [ys, ctx] = InvertedActivation<T>(kind, Strategy::SignBit).forward(xs);
  auto result = std::forward<Consumer>(consumer)(std::as_const(ys));
  return std::pair<decltype(result), SavedActivation<T>>(std::move(result), std::move(ctx));
}

// Activation fused with a following affine map Y = f(X) W + b, where X is
// row-major [rows, in] and W is [in, out]. The only saved tensor is the
// sign-encoded activation output.
template <IndicatorFormat T>
class SignBitLinear {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  struct Gradients {
    Tensor<T> input;
    Matrix weight;
    Vector bias;
  };

  explicit SignBitLinear(ActivationKind kind) : kind_(kind), layer_(kind, Strategy::SignBit) {}

  Tensor<T> forward(const Tensor<T>& xs, const Matrix& weight, const Vector& bias) {
    if (xs.shape().size() != 2 || xs.shape()[1] != weight.rows() || bias.size() != weight.cols()) {
      throw std::invalid_argument("SignBitLinear: shape mismatch");
    }
    weight_ = weight;
    auto [out, ctx] = forward_fused_sign_bit<T>(kind_, xs, [&](const Tensor<T>& ys) {
      const Eigen::Map<const RowMatrix> act(ys.values().data(), ys.shape()[0], ys.shape()[1]);
      RowMatrix result = (act * weight).rowwise() + bias.transpose();
      return result;
    });
    ctx_.emplace(std::move(ctx));
    const Eigen::Index rows = out.rows();
    const Eigen::Index cols = out.cols();
    return Tensor<T>(Shape{rows, cols}, Eigen::Map<const typename Tensor<T>::Array>(out.data(), out.size()));
  }

  Gradients backward(const Tensor<T>& dys) const {
    if (!ctx_) throw std::logic_error("SignBitLinear::backward before forward");
    const auto& shape = ctx_->shape();
    const Eigen::Map<const RowMatrix> dy(dys.values().data(), shape[0], weight_.cols());
    const Tensor<T> ys = decode_output(kind_, *ctx_);
    const Eigen::Map<const RowMatrix> act(ys.values().data(), shape[0], shape[1]);

    Gradients g;
    g.weight = act.transpose() * dy;
    g.bias = dy.colwise().sum().transpose();
    RowMatrix d_act = dy * weight_.transpose();
    Tensor<T> d_act_t(shape, Eigen::Map<const typename Tensor<T>::Array>(d_act.data(), d_act.size()));
    g.input = layer_.backward(*ctx_, d_act_t);
    return g;
  }

  const SavedActivation<T>& saved() const { return *ctx_; }

 private:
  ActivationKind kind_;
  InvertedActivation<T> layer_;
  Matrix weight_;
  std::optional<SavedActivation<T>> ctx_;
};

}  // namespace invact
