// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace invact {

enum class ActivationKind { Gelu, Silu };

// Left: the decreasing part x < T. Right: the increasing part x >= T.
enum class Branch { Left, Right };

std::string_view to_string(ActivationKind kind);
std::string_view to_string(Branch branch);
ActivationKind parse_activation_kind(std::string_view text);
Branch parse_branch(std::string_view text);

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Phi(x) via erfc keeps relative accuracy in the left tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

inline double gelu(double x) { return x * normal_cdf(x); }

inline double gelu_derivative(double x) {
  const double cdf = normal_cdf(x);
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace detail

// Exact erf-based GELU x*Phi(x) and SiLU x*sigmoid(x). Non-finite inputs
// follow ordinary floating-point propagation.
inline double eval_forward(ActivationKind kind, double x) {
  return kind == ActivationKind::Gelu ? detail::gelu(x) : detail::silu(x);
}

inline double eval_derivative(ActivationKind kind, double x) {
  return kind == ActivationKind::Gelu ? detail::gelu_derivative(x) : detail::silu_derivative(x);
}

// Root of f' in (-4, 0) by bisection on the sign change, to 1e-14.
double branch_threshold(ActivationKind kind);

// T and C = f(T), computed once per kind.
struct BranchGeometry {
  double threshold;
  double minimum;
};
const BranchGeometry& geometry(ActivationKind kind);

// x on the requested branch with f(x) = y. Throws std::domain_error when y is
// below the minimum, or when y >= 0 is requested on the left branch.
double inverse_oracle(ActivationKind kind, double y, Branch branch);

// Absolute-value grouping of the GELU left-branch product term:
//   Nested: |c3 y^2 + |c4 y + c5| + c6| + c7
//   Flat:   |c3 y^2| + |c4 y + c5| + c6 + c7
enum class LeftGrouping { Nested, Flat };

std::string_view to_string(LeftGrouping grouping);
LeftGrouping parse_left_grouping(std::string_view text);

// Coefficients c_i of one branch approximation of f'(f^{-1}(y)). `shift` is
// f(T); the formulas that use the shifted output evaluate y - shift.
struct BranchCoefficients {
  ActivationKind kind = ActivationKind::Gelu;
  Branch side = Branch::Left;
  std::vector<double> c;
  double shift = 0.0;
  LeftGrouping grouping = LeftGrouping::Nested;

  // Throws std::invalid_argument when the count does not fit the formula.
  void validate() const;
};

// Number of c_i the formula for (kind, side) consumes: 8/5 for GELU, 4/5 for SiLU.
std::size_t required_coefficients(ActivationKind kind, Branch side);

// The coefficient tables exactly as tabulated, keyed by the table heading.
// For SiLU the table under "left" holds five values and the one under
// "right" four, which does not match the formulas; see resolve_approximation.
std::vector<double> tabulated_coefficients(ActivationKind kind, Branch heading);

struct Approximation {
  BranchCoefficients left;
  BranchCoefficients right;
};

// The adopted coefficient sets: GELU with nested grouping, SiLU with the two
// tables exchanged. Both choices are re-derived by resolve_approximation.
const Approximation& default_approximation(ActivationKind kind);

// Branch approximation with domain checks. y within 1e-12 of f(T) is
// evaluated on the right branch regardless of `branch`.
double q_approx(ActivationKind kind, double y, Branch branch, const BranchCoefficients& coeffs);
double q_approx(ActivationKind kind, double y, Branch branch);

namespace detail {

// The four branch formulas. `c` points at the branch's coefficients.
inline double gelu_left(const double* c, bool nested, double y) {
  const double outer = c[0] * std::sqrt(std::fmax(y + c[1], 0.0)) * (2.0 * y + c[2] * std::sqrt(std::fmax(-y, 0.0)));
  const double inner = std::fabs(c[4] * y + c[5]);
  const double tail = nested ? std::fabs(c[3] * y * y + inner + c[6]) + c[7]
                             : std::fabs(c[3] * y * y) + inner + c[6] + c[7];
  return outer * tail;
}

inline double gelu_right(const double* c, double shift, double y) {
  const double t = std::fmax(y - shift, 0.0);
  const double d = c[4] - t;
  return 1.0 + (c[0] + c[1] * std::sqrt(t) + c[2] * t) * std::exp(c[3] * d * d * d);
}

inline double silu_left(const double* c, double shift, double y) {
  const double t = std::fmax(y - shift, 0.0);
  return (c[0] + c[1] * std::sqrt(t) + c[2] * t + c[3] * t * t) * (1.0 - y) + y;
}

inline double silu_right(const double* c, double shift, double y) {
  return gelu_right(c, shift, y) * (1.0 - y) + y;
}

}  // namespace detail

// Unchecked evaluator for inner loops. Radicands are clamped at zero and both
// branches are computed so that the indicator is consumed by a select.
class ApproximationKernel {
 public:
  explicit ApproximationKernel(const Approximation& approx);
  explicit ApproximationKernel(ActivationKind kind) : ApproximationKernel(default_approximation(kind)) {}

  ActivationKind kind() const { return kind_; }

  double left(double y) const {
    return kind_ == ActivationKind::Gelu ? detail::gelu_left(left_.data(), nested_, y)
                                         : detail::silu_left(left_.data(), shift_, y);
  }

  double right(double y) const {
    return kind_ == ActivationKind::Gelu ? detail::gelu_right(right_.data(), shift_, y)
                                         : detail::silu_right(right_.data(), shift_, y);
  }

  // `left_branch` is the stored indicator s (true iff x < T).
  double operator()(double y, bool left_branch) const {
    const double l = left(y);
    const double r = right(y);
    return left_branch ? l : r;
  }

 private:
  ActivationKind kind_;
  std::array<double, 8> left_{};
  std::array<double, 5> right_{};
  double shift_;
  bool nested_;
};

// L2 is the root-mean-square error under the grid's weights.
struct ErrorReport {
  double l2 = 0.0;
  double linf = 0.0;
  std::size_t points = 0;
  std::string grid_spec;
};

// Output-space measures for a single branch. UniformGrid spaces y evenly from
// f(T) + 1e-9 to the image of x = -12 (left) or x = 12 (right);
// GaussianPushforward draws x ~ N(0, 1) restricted to the branch.
enum class OutputMeasure { UniformGrid, GaussianPushforward };

std::string_view to_string(OutputMeasure measure);
OutputMeasure parse_output_measure(std::string_view text);

ErrorReport approx_error(ActivationKind kind, Branch branch, std::size_t n_points, OutputMeasure measure,
                         const BranchCoefficients& coeffs, std::uint64_t seed = 0x5eedULL);
ErrorReport approx_error(ActivationKind kind, Branch branch, std::size_t n_points, OutputMeasure measure);

// Outcome of the coefficient decision procedure for one kind: every
// candidate is scored against the oracle and the lowest combined L-inf wins.
struct ApproximationCandidate {
  std::string label;
  bool evaluable = true;
  ErrorReport left;
  ErrorReport right;
  double combined_linf = 0.0;
  Approximation approx;
};

struct ApproximationResolution {
  ActivationKind kind;
  std::vector<ApproximationCandidate> candidates;
  std::size_t adopted = 0;

  const ApproximationCandidate& chosen() const { return candidates.at(adopted); }
};

ApproximationResolution resolve_approximation(ActivationKind kind, std::size_t n_points = 20000);

// Coefficient files: one key=value record per branch with
// kind, side, shift, grouping (GELU left only) and c0..cN.
void write_coefficients(std::ostream& out, const std::vector<BranchCoefficients>& sets);
std::vector<BranchCoefficients> read_coefficients(std::istream& in);
Approximation load_approximation(const std::string& path, ActivationKind kind);

}  // namespace invact
