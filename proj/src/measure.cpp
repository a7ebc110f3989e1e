// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/measure.hpp"

#include <stdexcept>
#include <string>

namespace invact {

std::string_view to_string(InputMeasure measure) {
  return measure == InputMeasure::Uniform ? "uniform" : "normal";
}

InputMeasure parse_input_measure(std::string_view text) {
  if (text == "uniform") return InputMeasure::Uniform;
  if (text == "normal" || text == "gaussian") return InputMeasure::StandardNormal;
  throw std::invalid_argument("unknown input measure: " + std::string(text));
}

WeightedGrid make_grid(InputMeasure measure, std::size_t n_points) {
  if (n_points < 2) throw std::invalid_argument("make_grid: n_points must be >= 2");
  WeightedGrid grid;
  grid.x = Eigen::ArrayXd::LinSpaced(static_cast<Eigen::Index>(n_points), -12.0, 12.0);
  if (measure == InputMeasure::Uniform) {
    grid.w = Eigen::ArrayXd::Constant(grid.x.size(), 1.0);
  } else {
    grid.w = (-0.5 * grid.x.square()).exp();
  }
  grid.w /= grid.w.sum();
  return grid;
}

ErrorReport weighted_error(const WeightedGrid& grid, const Eigen::ArrayXd& approx, const Eigen::ArrayXd& exact,
                           std::string grid_spec) {
  const Eigen::ArrayXd err = approx - exact;
  ErrorReport report;
  report.points = static_cast<std::size_t>(grid.x.size());
  report.l2 = std::sqrt((grid.w * err.square()).sum());
  report.linf = err.abs().maxCoeff();
  report.grid_spec = std::move(grid_spec);
  return report;
}

ErrorReport invact_error(ActivationKind kind, InputMeasure measure, std::size_t n_points,
                         const Approximation& approx) {
  const auto grid = make_grid(measure, n_points);
  const ApproximationKernel q(approx);
  const double threshold = geometry(kind).threshold;
  const Eigen::ArrayXd estimate =
      grid.x.unaryExpr([&](double x) { return q(eval_forward(kind, x), x < threshold); });
  const Eigen::ArrayXd exact = grid.x.unaryExpr([&](double x) { return eval_derivative(kind, x); });
  return weighted_error(grid, estimate, exact,
                        std::string(to_string(measure)) + " measure on x in [-12, 12], " +
                            std::to_string(n_points) + " nodes");
}

ErrorReport invact_error(ActivationKind kind, InputMeasure measure, std::size_t n_points) {
  return invact_error(kind, measure, n_points, default_approximation(kind));
}

}  // namespace invact
