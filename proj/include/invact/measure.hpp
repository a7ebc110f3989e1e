// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

#include <Eigen/Core>

#include "invact/activation_math.hpp"

namespace invact {

// Input-space measures on x in [-12, 12], used to compare the inverted
// approximation with derivative quantizers on the same footing.
enum class InputMeasure { Uniform, StandardNormal };

std::string_view to_string(InputMeasure measure);
InputMeasure parse_input_measure(std::string_view text);

// Evenly spaced nodes with weights summing to one: equal weights for Uniform,
// weights proportional to the normal density for StandardNormal.
struct WeightedGrid {
  Eigen::ArrayXd x;
  Eigen::ArrayXd w;
};

WeightedGrid make_grid(InputMeasure measure, std::size_t n_points);

// Weighted RMS and max of `approx - exact` over the grid.
ErrorReport weighted_error(const WeightedGrid& grid, const Eigen::ArrayXd& approx, const Eigen::ArrayXd& exact,
                           std::string grid_spec);

// Error of the two-branch inverted approximation, evaluated at x through
// y = f(x) and the indicator x < T, against f'(x).
ErrorReport invact_error(ActivationKind kind, InputMeasure measure, std::size_t n_points,
                         const Approximation& approx);
ErrorReport invact_error(ActivationKind kind, InputMeasure measure, std::size_t n_points);

}  // namespace invact
