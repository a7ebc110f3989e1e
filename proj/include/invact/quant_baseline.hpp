// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "invact/activation_math.hpp"
#include "invact/measure.hpp"
#include "invact/tensor.hpp"

namespace invact {

// k-bit scalar quantizer of f'(x). Cells are intervals of derivative values:
// code j covers [boundaries[j-1], boundaries[j]) and decodes to levels[j].
// f' is not monotone in x, so a cell pulls back to up to three x-intervals.
struct QuantizerTable {
  ActivationKind kind = ActivationKind::Gelu;
  int bits = 1;
  InputMeasure measure = InputMeasure::Uniform;
  std::vector<double> boundaries;  // 2^k - 1, strictly increasing, midpoints of adjacent levels
  std::vector<double> levels;      // 2^k, conditional means of f' over each cell
  std::size_t grid_points = 0;
  std::size_t iterations = 0;

  std::size_t size() const { return levels.size(); }
  std::uint8_t code_of_derivative(double derivative) const;
  std::uint8_t encode(double x) const { return code_of_derivative(eval_derivative(kind, x)); }
};

class QuantizerConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kQuantizerGridPoints = 1'000'001;
inline constexpr std::size_t kQuantizerMaxIterations = 10'000;

// Lloyd-Max on the weighted grid of `measure` over x in [-12, 12], started
// from levels spread uniformly over [min f', max f']. Runs until the
// partition stops changing.
QuantizerTable build_quantizer(ActivationKind kind, int bits, InputMeasure measure,
                               std::size_t grid_points = kQuantizerGridPoints);

// Largest violation of the centroid and nearest-neighbour conditions on the
// table's own grid.
struct FixedPointResidual {
  double centroid = 0.0;
  double nearest_neighbour = 0.0;
};
FixedPointResidual fixed_point_residual(const QuantizerTable& table);

// Same grid and weights as invact_error, so the two are directly comparable.
ErrorReport quantizer_error(const QuantizerTable& table, std::size_t grid_points);
ErrorReport quantizer_error(const QuantizerTable& table);

// One unpacked byte per element.
template <typename T>
std::vector<std::uint8_t> encode_codes(const QuantizerTable& table, std::span<const T> xs) {
  std::vector<std::uint8_t> codes(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) codes[i] = table.encode(static_cast<double>(xs[i]));
  return codes;
}

// dxs[i] = dys[i] * levels[codes[i]].
template <typename T>
Tensor<T> quantized_backward(const QuantizerTable& table, std::span<const std::uint8_t> codes, const Tensor<T>& dys) {
  if (codes.size() != static_cast<std::size_t>(dys.size())) {
    throw std::invalid_argument("quantized_backward: code count does not match gradient size");
  }
  typename Tensor<T>::Array dxs(dys.size());
  const auto dy = dys.span();
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= table.levels.size()) {
      throw std::invalid_argument("quantized_backward: code " + std::to_string(codes[i]) + " out of range for " +
                                  std::to_string(table.bits) + "-bit table");
    }
    dxs[static_cast<Eigen::Index>(i)] = static_cast<T>(static_cast<double>(dy[i]) * table.levels[codes[i]]);
  }
  return Tensor<T>(dys.shape(), std::move(dxs));
}

void write_quantizer(std::ostream& out, const QuantizerTable& table);
QuantizerTable read_quantizer(std::istream& in);

}  // namespace invact
