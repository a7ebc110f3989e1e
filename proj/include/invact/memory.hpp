// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invact/invact_layer.hpp"
#include "invact/kv_file.hpp"

namespace invact {

enum class LayerRole { Linear, Activation, Multiply, Norm, Attention, Add };

// A layer reads named tensors and writes one; `saves_inputs` says whether it
// keeps its inputs for backward. Tensors saved by several layers are stored once.
struct LayerSpec {
  std::string name;
  LayerRole role;
  std::vector<std::string> inputs;
  std::string output;
  bool saves_inputs = true;
};

struct TensorSpec {
  std::string name;
  std::uint64_t elements;
};

struct BlockSpec {
  std::string name;
  std::vector<TensorSpec> tensors;
  std::vector<LayerSpec> layers;
  std::uint64_t repeat = 1;

  std::uint64_t elements(const std::string& tensor) const;
};

struct LayerMemory {
  std::string layer;
  std::uint64_t baseline_bytes = 0;
  std::uint64_t invact_bytes = 0;
};

struct MemoryEstimate {
  std::string block;
  Strategy strategy = Strategy::Bitset;
  ElementFormat format = ElementFormat::Binary16;
  std::vector<LayerMemory> per_layer;  // one repeat of the block
  std::uint64_t baseline_total = 0;    // all repeats
  std::uint64_t invact_total = 0;
  double saving = 0.0;                 // 1 - invact_total / baseline_total
  std::vector<std::string> warnings;
};

// Activations save their output instead of their input whenever a later
// layer already saves that output; otherwise they keep the input and a
// warning records that nothing is saved.
MemoryEstimate estimate_memory(const BlockSpec& block, Strategy strategy, ElementFormat format);

namespace presets {

// Linear(d -> e*d), activation, Linear(e*d -> d) over `tokens` rows.
BlockSpec mlp_block(std::uint64_t d_model, std::uint64_t expansion, std::uint64_t tokens);
// activation(x) followed by Linear(d -> d).
BlockSpec activation_linear(std::uint64_t d_model, std::uint64_t tokens);
// f(x W_a) * (x W_b), d -> hidden.
BlockSpec geglu_block(std::uint64_t d_model, std::uint64_t hidden, std::uint64_t tokens);
// A lone activation whose output is consumed by nothing that saves it.
BlockSpec plain_activation(std::uint64_t elements);
// Activation feeding a residual add, which saves nothing.
BlockSpec activation_into_add(std::uint64_t d_model, std::uint64_t tokens);
// Pre-norm encoder layer with fused attention (saves q, k, v, o and the
// per-head log-sum-exp) and an `expansion`x MLP, repeated `layers` times.
BlockSpec transformer(std::uint64_t layers, std::uint64_t d_model, std::uint64_t heads, std::uint64_t expansion,
                      std::uint64_t tokens);

}  // namespace presets

// Memory spec files: block = mlp | act-linear | geglu | plain | act-add |
// transformer, plus d_model, expansion, hidden, tokens, layers, heads.
BlockSpec block_from_record(const KeyValueRecord& record);

}  // namespace invact
