// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "invact/invact_layer.hpp"
#include "invact/quant_baseline.hpp"
#include "invact/tensor.hpp"

namespace invact {

// How an activation node keeps what its backward pass needs: the exact
// derivative from the saved input, an inverted strategy, or a k-bit code of
// f'(x) per element.
struct ActivationPolicy {
  Strategy strategy = Strategy::Baseline;
  std::shared_ptr<const QuantizerTable> quantizer;

  static ActivationPolicy exact() { return {}; }
  static ActivationPolicy inverted(Strategy strategy = Strategy::Bitset) { return {strategy, nullptr}; }
  static ActivationPolicy quantized(std::shared_ptr<const QuantizerTable> table) {
    return {Strategy::Baseline, std::move(table)};
  }

  bool is_quantized() const { return quantizer != nullptr; }
  std::string label() const {
    return is_quantized() ? "quantized-" + std::to_string(quantizer->bits) + "bit" : std::string(to_string(strategy));
  }
};

// Reverse-mode tape over dense matrices. Node values are column-major
// [rows, cols] tensors; a node may only reference earlier nodes, so node ids
// are a topological order and backward walks them in reverse.
template <typename Scalar>
class Tape {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using ConstMap = Eigen::Map<const Matrix>;
  using Array = typename Tensor<Scalar>::Array;

  struct Var {
    std::size_t id;
  };

  enum class Op { Constant, Input, Parameter, Linear, Activation, Multiply, MseLoss, CrossEntropyLoss };

  explicit Tape(int threads = 1) : threads_(threads) {}

  Var constant(const Matrix& value) { return leaf(Op::Constant, value, false); }
  Var parameter(const Matrix& value) { return leaf(Op::Parameter, value, true); }

  // Activation data that still receives a gradient, as the output of an
  // earlier layer would.
  Var input(const Matrix& value) { return leaf(Op::Input, value, true); }

  // Leaves that share the storage of a [rows, cols] tensor instead of copying.
  Var constant(const Tensor<Scalar>& value) { return leaf(Op::Constant, value, false); }
  Var input(const Tensor<Scalar>& value) { return leaf(Op::Input, value, true); }
  Var parameter(const Tensor<Scalar>& value) { return leaf(Op::Parameter, value, true); }

  // Y = X W + b with X [n, in], W [in, out], b [1, out]. Saves X.
  Var linear(Var x, Var w, Var b) {
    const auto X = value(x);
    const auto W = value(w);
    const auto B = value(b);
    if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols()) {
      throw std::invalid_argument("Tape::linear: shape mismatch " + dims(X) + " * " + dims(W) + " + " + dims(B));
    }
    Array out(X.rows() * W.cols());
    Eigen::Map<Matrix> Y(out.data(), X.rows(), W.cols());
    Y.noalias() = X * W;
    Y.rowwise() += B.row(0);
    Node node = make_node(Op::Linear, {x, w, b}, Tensor<Scalar>(Shape{X.rows(), W.cols()}, std::move(out)));
    return push(std::move(node));
  }

  Var activation(Var x, ActivationKind kind, const ActivationPolicy& policy) {
    const Tensor<Scalar>& input = nodes_.at(x.id).value;
    Node node = make_node(Op::Activation, {x}, Tensor<Scalar>());
    node.kind = kind;
    node.policy = policy;
    if (policy.is_quantized()) {
      if (policy.quantizer->kind != kind) throw std::invalid_argument("Tape::activation: quantizer kind mismatch");
      node.codes = encode_codes<Scalar>(*policy.quantizer, input.span());
      auto [ys, ctx] = InvertedActivation<Scalar>(kind, Strategy::Baseline, threads_).forward(input);
      node.value = ys;
    } else {
      auto [ys, ctx] = InvertedActivation<Scalar>(kind, policy.strategy, threads_).forward(input);
      node.value = ys;
      node.saved.emplace(std::move(ctx));
    }
    return push(std::move(node));
  }

  // Elementwise product. Saves both operands.
  Var multiply(Var a, Var b) {
    const auto A = value(a);
    const auto B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) {
      throw std::invalid_argument("Tape::multiply: shape mismatch " + dims(A) + " vs " + dims(B));
    }
    Array out(A.size());
    Eigen::Map<Matrix>(out.data(), A.rows(), A.cols()) = A.cwiseProduct(B);
    return push(make_node(Op::Multiply, {a, b}, Tensor<Scalar>(Shape{A.rows(), A.cols()}, std::move(out))));
  }

  // mean((pred - target)^2) over all elements.
  Var mse_loss(Var pred, Var target) {
    const auto P = value(pred);
    const auto T = value(target);
    if (P.rows() != T.rows() || P.cols() != T.cols()) {
      throw std::invalid_argument("Tape::mse_loss: shape mismatch " + dims(P) + " vs " + dims(T));
    }
    Array out(1);
    out[0] = (P - T).squaredNorm() / static_cast<Scalar>(P.size());
    return push(make_node(Op::MseLoss, {pred, target}, Tensor<Scalar>(Shape{1, 1}, std::move(out))));
  }

  // Mean negative log-likelihood of softmax(logits) at `labels`, one per row.
  Var cross_entropy_loss(Var logits, std::vector<int> labels) {
    const auto Z = value(logits);
    if (static_cast<Eigen::Index>(labels.size()) != Z.rows()) {
      throw std::invalid_argument("Tape::cross_entropy_loss: one label per row required");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
      const int label = labels[static_cast<std::size_t>(r)];
      if (label < 0 || label >= Z.cols()) throw std::invalid_argument("Tape::cross_entropy_loss: label out of range");
      const double m = static_cast<double>(Z.row(r).maxCoeff());
      double sum = 0.0;
      for (Eigen::Index c = 0; c < Z.cols(); ++c) sum += std::exp(static_cast<double>(Z(r, c)) - m);
      total += m + std::log(sum) - static_cast<double>(Z(r, label));
    }
    Array out(1);
    out[0] = static_cast<Scalar>(total / static_cast<double>(Z.rows()));
    Node node = make_node(Op::CrossEntropyLoss, {logits}, Tensor<Scalar>(Shape{1, 1}, std::move(out)));
    node.labels = std::move(labels);
    return push(std::move(node));
  }

  ConstMap value(Var v) const {
    const auto& t = nodes_.at(v.id).value;
    return ConstMap(t.values().data(), t.shape()[0], t.shape()[1]);
  }
  const Tensor<Scalar>& tensor(Var v) const { return nodes_.at(v.id).value; }
  Scalar scalar(Var v) const {
    const auto m = value(v);
    if (m.size() != 1) throw std::invalid_argument("Tape::scalar: node is not 1x1");
    return m(0, 0);
  }

  void backward(Var root) {
    if (value(root).size() != 1) throw std::invalid_argument("Tape::backward: root must be 1x1 without a seed");
    backward(root, Matrix::Ones(1, 1));
  }

  // Visits every node reachable from `root` once, in reverse creation order.
  void backward(Var root, const Matrix& seed) {
    const auto R = value(root);
    if (seed.rows() != R.rows() || seed.cols() != R.cols()) {
      throw std::invalid_argument("Tape::backward: seed shape " + dims(seed) + " does not match " + dims(R));
    }
    grads_.assign(nodes_.size(), Matrix());
    visited_.clear();
    grads_[root.id] = seed;
    for (std::size_t id = root.id + 1; id-- > 0;) {
      if (grads_[id].size() == 0 || !nodes_[id].requires_grad) continue;
      visited_.push_back(id);
      propagate(id);
    }
  }

  // Zero matrix of the node's shape if backward never reached it.
  Matrix grad(Var v) const {
    if (v.id < grads_.size() && grads_[v.id].size() != 0) return grads_[v.id];
    const auto V = value(v);
    return Matrix::Zero(V.rows(), V.cols());
  }

  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::vector<std::size_t> inputs(Var v) const {
    std::vector<std::size_t> ids;
    for (const auto& in : nodes_.at(v.id).inputs) ids.push_back(in.id);
    return ids;
  }
  const std::vector<std::size_t>& last_visit_order() const { return visited_; }

  // Bytes of non-parameter data held for backward. A tensor saved by several
  // nodes is counted once; packed indicators and quantizer codes are added.
  std::size_t saved_bytes() const {
    std::unordered_set<const void*> seen;
    std::size_t total = 0;
    auto count = [&](const Tensor<Scalar>& t) {
      if (seen.insert(t.storage_id()).second) total += t.bytes();
    };
    auto count_input = [&](Var v) {
      if (nodes_[v.id].op != Op::Parameter) count(nodes_[v.id].value);
    };
    for (const auto& node : nodes_) {
      switch (node.op) {
        case Op::Linear: count_input(node.inputs[0]); break;
        case Op::Multiply:
        case Op::MseLoss:
          count_input(node.inputs[0]);
          count_input(node.inputs[1]);
          break;
        case Op::CrossEntropyLoss: count_input(node.inputs[0]); break;
        case Op::Activation:
          if (node.saved) {
            count(node.saved->tensor());
            if (node.saved->strategy() == Strategy::Bitset) total += node.saved->extra_bytes();
          } else {
            total += node.codes.size();
          }
          break;
        default: break;
      }
    }
    return total;
  }

 private:
  struct Node {
    Op op = Op::Constant;
    std::vector<Var> inputs;
    Tensor<Scalar> value;
    bool requires_grad = false;
    ActivationKind kind = ActivationKind::Gelu;
    ActivationPolicy policy;
    std::optional<SavedActivation<Scalar>> saved;
    std::vector<std::uint8_t> codes;
    std::vector<int> labels;
  };

  static std::string dims(const auto& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

  Node make_node(Op op, std::vector<Var> inputs, Tensor<Scalar> value) const {
    Node node;
    node.op = op;
    node.inputs = std::move(inputs);
    node.value = std::move(value);
    for (const auto& in : node.inputs) {
      if (in.id >= nodes_.size()) throw std::invalid_argument("Tape: input does not precede node");
      node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    return node;
  }

  Var leaf(Op op, const Matrix& m, bool requires_grad) {
    Array values = Eigen::Map<const Array>(m.data(), m.size());
    Node node;
    node.op = op;
    node.value = Tensor<Scalar>(Shape{m.rows(), m.cols()}, std::move(values));
    node.requires_grad = requires_grad;
    return push(std::move(node));
  }

  Var leaf(Op op, const Tensor<Scalar>& t, bool requires_grad) {
    if (t.shape().size() != 2) throw std::invalid_argument("Tape: leaf tensors must be two-dimensional");
    Node node;
    node.op = op;
    node.value = t;
    node.requires_grad = requires_grad;
    return push(std::move(node));
  }

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  void accumulate(Var v, const Matrix& g) {
    if (!nodes_[v.id].requires_grad) return;
    auto& slot = grads_[v.id];
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  }

  bool wants(Var v) const { return nodes_[v.id].requires_grad; }

  void propagate(std::size_t id) {
    const Node& node = nodes_[id];
    const Matrix& dy = grads_[id];
    switch (node.op) {
      case Op::Constant:
      case Op::Input:
      case Op::Parameter: break;
      case Op::Linear: {
        const Var x = node.inputs[0];
        const Var w = node.inputs[1];
        const Var b = node.inputs[2];
        if (wants(x)) accumulate(x, dy * value(w).transpose());
        if (wants(w)) accumulate(w, value(x).transpose() * dy);
        if (wants(b)) accumulate(b, dy.colwise().sum());
        break;
      }
      case Op::Activation: {
        const Var x = node.inputs[0];
        if (!wants(x)) break;
        Tensor<Scalar> dy_t(node.value.shape(), Eigen::Map<const Array>(dy.data(), dy.size()));
        const Tensor<Scalar> dx =
            node.saved ? InvertedActivation<Scalar>(node.kind, node.saved->strategy(), threads_).backward(*node.saved,
                                                                                                          dy_t)
                       : quantized_backward<Scalar>(*node.policy.quantizer, node.codes, dy_t);
        accumulate(x, ConstMap(dx.values().data(), dy.rows(), dy.cols()));
        break;
      }
      case Op::Multiply: {
        const Var a = node.inputs[0];
        const Var b = node.inputs[1];
        if (wants(a)) accumulate(a, (dy.array() * value(b).array()).matrix());
        if (wants(b)) accumulate(b, (dy.array() * value(a).array()).matrix());
        break;
      }
      case Op::MseLoss: {
        const Var p = node.inputs[0];
        const Var t = node.inputs[1];
        const Scalar scale = Scalar(2) * dy(0, 0) / static_cast<Scalar>(value(p).size());
        const Matrix diff = value(p) - value(t);
        if (wants(p)) accumulate(p, scale * diff);
        if (wants(t)) accumulate(t, -scale * diff);
        break;
      }
      case Op::CrossEntropyLoss: {
        const Var z = node.inputs[0];
        if (!wants(z)) break;
        const auto Z = value(z);
        Matrix g(Z.rows(), Z.cols());
        const double scale = static_cast<double>(dy(0, 0)) / static_cast<double>(Z.rows());
        for (Eigen::Index r = 0; r < Z.rows(); ++r) {
          const double m = static_cast<double>(Z.row(r).maxCoeff());
          double sum = 0.0;
          for (Eigen::Index c = 0; c < Z.cols(); ++c) sum += std::exp(static_cast<double>(Z(r, c)) - m);
          for (Eigen::Index c = 0; c < Z.cols(); ++c) {
            const double p = std::exp(static_cast<double>(Z(r, c)) - m) / sum;
            const double onehot = c == node.labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
            g(r, c) = static_cast<Scalar>(scale * (p - onehot));
          }
        }
        accumulate(z, g);
        break;
      }
    }
  }

  int threads_;
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::vector<std::size_t> visited_;
};

template <typename Scalar>
struct LinearVars {
  typename Tape<Scalar>::Var weight;
  typename Tape<Scalar>::Var bias;
};

// Linear -> activation -> Linear.
template <typename Scalar>
typename Tape<Scalar>::Var mlp_block(Tape<Scalar>& tape, typename Tape<Scalar>::Var x, const LinearVars<Scalar>& fc1,
                                     const LinearVars<Scalar>& fc2, ActivationKind kind,
                                     const ActivationPolicy& policy) {
  const auto h = tape.linear(x, fc1.weight, fc1.bias);
  const auto a = tape.activation(h, kind, policy);
  return tape.linear(a, fc2.weight, fc2.bias);
}

// f(x W_g + b_g) * (x W_u + b_u).
template <typename Scalar>
typename Tape<Scalar>::Var geglu_block(Tape<Scalar>& tape, typename Tape<Scalar>::Var x,
                                       const LinearVars<Scalar>& gate, const LinearVars<Scalar>& up,
                                       ActivationKind kind, const ActivationPolicy& policy) {
  const auto g = tape.linear(x, gate.weight, gate.bias);
  const auto u = tape.linear(x, up.weight, up.bias);
  const auto a = tape.activation(g, kind, policy);
  return tape.multiply(a, u);
}

}  // namespace invact
