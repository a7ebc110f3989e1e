// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace invact {

// Relative error per coordinate is |a - n| / max(1, |a|, |n|).
struct GradcheckReport {
  std::string target;
  std::size_t dimension = 0;
  double h = 0.0;
  double tol = 0.0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;
using GradientFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd central_difference(const ScalarFunction& fn, const Eigen::VectorXd& point, double h);

GradcheckReport compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double tol);

GradcheckReport gradcheck(const ScalarFunction& fn, const GradientFunction& grad, const Eigen::VectorXd& point,
                          double h, double tol);

// Named problems driven by the CLI and the tests: quadratic, gelu, silu,
// linear, mlp, geglu (exact backward) and mlp-bitset, geglu-bitset (inverted
// backward against finite differences of the exact loss).
std::vector<std::string> gradcheck_targets();
GradcheckReport run_gradcheck_target(const std::string& target, double tol, double h = 1e-6,
                                     std::uint64_t seed = 7);

}  // namespace invact
