// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "invact/activation_math.hpp"
#include "invact/tape.hpp"

namespace invact {

Eigen::VectorXd central_difference(const ScalarFunction& fn, const Eigen::VectorXd& point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("central_difference: h must be positive");
  Eigen::VectorXd grad(point.size());
  Eigen::VectorXd p = point;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = fn(p);
    p[i] = orig - h;
    const double down = fn(p);
    p[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

GradcheckReport compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double tol) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("compare_gradients: size mismatch");
  GradcheckReport r;
  r.dimension = static_cast<std::size_t>(analytic.size());
  r.tol = tol;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double abs_err = std::fabs(a - n);
    const double rel_err = abs_err / std::max({1.0, std::fabs(a), std::fabs(n)});
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    if (rel_err > r.max_rel_error) {
      r.max_rel_error = rel_err;
      r.worst_index = static_cast<std::size_t>(i);
    }
  }
  r.passed = r.max_rel_error <= tol;
  return r;
}

GradcheckReport gradcheck(const ScalarFunction& fn, const GradientFunction& grad, const Eigen::VectorXd& point,
                          double h, double tol) {
  auto report = compare_gradients(grad(point), central_difference(fn, point, h), tol);
  report.h = h;
  return report;
}

namespace {

// A small network whose parameters are flattened into one vector in the
// order they are created.
struct NetworkProblem {
  enum class Shape { Linear, Mlp, Geglu };
  Shape shape;
  ActivationKind kind = ActivationKind::Gelu;
  Eigen::MatrixXd x, target;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> param_dims;

  std::vector<Eigen::MatrixXd> unflatten(const Eigen::VectorXd& p) const {
    std::vector<Eigen::MatrixXd> out;
    Eigen::Index offset = 0;
    for (const auto& [r, c] : param_dims) {
      out.push_back(Eigen::Map<const Eigen::MatrixXd>(p.data() + offset, r, c));
      offset += r * c;
    }
    return out;
  }

  Eigen::Index dimension() const {
    Eigen::Index n = 0;
    for (const auto& [r, c] : param_dims) n += r * c;
    return n;
  }

  double loss(const Eigen::VectorXd& p, const ActivationPolicy& policy, Eigen::VectorXd* grad) const {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    for (const auto& m : unflatten(p)) vars.push_back(tape.parameter(m));
    const auto in = tape.constant(x);
    Tape<double>::Var out{};
    switch (shape) {
      case Shape::Linear: out = tape.linear(in, vars[0], vars[1]); break;
      case Shape::Mlp: out = mlp_block<double>(tape, in, {vars[0], vars[1]}, {vars[2], vars[3]}, kind, policy); break;
      case Shape::Geglu: {
        const auto g = geglu_block<double>(tape, in, {vars[0], vars[1]}, {vars[2], vars[3]}, kind, policy);
        out = tape.linear(g, vars[4], vars[5]);
        break;
      }
    }
    const auto l = tape.mse_loss(out, tape.constant(target));
    if (grad) {
      tape.backward(l);
      grad->resize(dimension());
      Eigen::Index offset = 0;
      for (const auto& v : vars) {
        const Eigen::MatrixXd g = tape.grad(v);
        grad->segment(offset, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
        offset += g.size();
      }
    }
    return tape.scalar(l);
  }
};

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace

std::vector<std::string> gradcheck_targets() {
  return {"quadratic", "gelu", "silu", "linear", "mlp", "geglu", "mlp-bitset", "geglu-bitset"};
}

GradcheckReport run_gradcheck_target(const std::string& target, double tol, double h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradcheckReport report;

  if (target == "quadratic") {
    const Eigen::MatrixXd m = random_matrix(rng, 6, 6, 1.0);
    const Eigen::MatrixXd a = m.transpose() * m;
    const Eigen::VectorXd b = random_matrix(rng, 6, 1, 1.0);
    const Eigen::VectorXd p = random_matrix(rng, 6, 1, 1.0);
    report = gradcheck([&](const Eigen::VectorXd& v) { return 0.5 * v.dot(a * v) + b.dot(v); },
                       [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v + b; }, p, h, tol);
  } else if (target == "gelu" || target == "silu") {
    const ActivationKind kind = parse_activation_kind(target);
    std::uniform_real_distribution<double> uniform(-4.0, 4.0);
    Eigen::VectorXd p(64);
    for (auto& v : p) v = uniform(rng);
    report = gradcheck(
        [&](const Eigen::VectorXd& v) { return v.unaryExpr([&](double x) { return eval_forward(kind, x); }).sum(); },
        [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
          return v.unaryExpr([&](double x) { return eval_derivative(kind, x); });
        },
        p, h, tol);
  } else {
    NetworkProblem problem;
    ActivationPolicy policy = ActivationPolicy::exact();
    std::string base = target;
    if (base.ends_with("-bitset")) {
      policy = ActivationPolicy::inverted(Strategy::Bitset);
      base = base.substr(0, base.size() - 7);
    }
    constexpr Eigen::Index rows = 6, in = 4, hidden = 5, out = 3;
    problem.x = random_matrix(rng, rows, in, 1.0);
    if (base == "linear") {
      problem.shape = NetworkProblem::Shape::Linear;
      problem.param_dims = {{in, out}, {1, out}};
    } else if (base == "mlp") {
      problem.shape = NetworkProblem::Shape::Mlp;
      problem.param_dims = {{in, hidden}, {1, hidden}, {hidden, out}, {1, out}};
    } else if (base == "geglu") {
      problem.shape = NetworkProblem::Shape::Geglu;
      problem.param_dims = {{in, hidden}, {1, hidden}, {in, hidden}, {1, hidden}, {hidden, out}, {1, out}};
    } else {
      throw std::invalid_argument("unknown gradcheck target: " + target);
    }
    problem.target = random_matrix(rng, rows, out, 1.0);
    const Eigen::VectorXd p = random_matrix(rng, problem.dimension(), 1, 0.7);
    report = gradcheck(
        [&](const Eigen::VectorXd& v) { return problem.loss(v, ActivationPolicy::exact(), nullptr); },
        [&](const Eigen::VectorXd& v) {
          Eigen::VectorXd g;
          problem.loss(v, policy, &g);
          return g;
        },
        p, h, tol);
  }
  report.target = target;
  return report;
}

}  // namespace invact
