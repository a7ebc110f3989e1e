// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/memory.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace invact {
namespace {

bool saved_by_consumer(const BlockSpec& block, std::size_t producer) {
  const auto& out = block.layers[producer].output;
  for (std::size_t j = producer + 1; j < block.layers.size(); ++j) {
    const auto& layer = block.layers[j];
    if (layer.saves_inputs && std::find(layer.inputs.begin(), layer.inputs.end(), out) != layer.inputs.end()) {
      return true;
    }
  }
  return false;
}

std::string dims(std::uint64_t a, std::uint64_t b) { return std::to_string(a) + "x" + std::to_string(b); }

}  // namespace

std::uint64_t BlockSpec::elements(const std::string& tensor) const {
  for (const auto& t : tensors) {
    if (t.name == tensor) return t.elements;
  }
  throw std::invalid_argument("BlockSpec " + name + ": unknown tensor '" + tensor + "'");
}

MemoryEstimate estimate_memory(const BlockSpec& block, Strategy strategy, ElementFormat format) {
  MemoryEstimate est;
  est.block = block.name;
  est.strategy = strategy;
  est.format = format;
  const std::uint64_t width = format_width(format);

  std::set<std::string> baseline_saved;
  std::set<std::string> invact_saved;
  std::uint64_t baseline_block = 0;
  std::uint64_t invact_block = 0;

  for (std::size_t i = 0; i < block.layers.size(); ++i) {
    const auto& layer = block.layers[i];
    LayerMemory mem{layer.name, 0, 0};

    if (layer.saves_inputs) {
      for (const auto& in : layer.inputs) {
        if (baseline_saved.insert(in).second) mem.baseline_bytes += block.elements(in) * width;
      }
    }

    const bool inverted = layer.role == LayerRole::Activation && strategy != Strategy::Baseline;
    if (inverted && saved_by_consumer(block, i)) {
      const std::uint64_t n = block.elements(layer.output);
      if (strategy == Strategy::Bitset) mem.invact_bytes += (n + 7) / 8;
    } else {
      if (inverted) {
        est.warnings.push_back("layer '" + layer.name +
                               "': the following layer does not save the activation output, no memory is saved");
      }
      if (layer.saves_inputs) {
        for (const auto& in : layer.inputs) {
          if (invact_saved.insert(in).second) mem.invact_bytes += block.elements(in) * width;
        }
      }
    }
    baseline_block += mem.baseline_bytes;
    invact_block += mem.invact_bytes;
    est.per_layer.push_back(std::move(mem));
  }

  est.baseline_total = baseline_block * block.repeat;
  est.invact_total = invact_block * block.repeat;
  est.saving = est.baseline_total == 0
                   ? 0.0
                   : 1.0 - static_cast<double>(est.invact_total) / static_cast<double>(est.baseline_total);
  return est;
}

namespace presets {

BlockSpec mlp_block(std::uint64_t d_model, std::uint64_t expansion, std::uint64_t tokens) {
  const std::uint64_t hidden = expansion * d_model;
  BlockSpec b;
  b.name = "mlp " + dims(tokens, d_model) + " -> " + std::to_string(hidden);
  b.tensors = {{"x", d_model * tokens}, {"h", hidden * tokens}, {"a", hidden * tokens}, {"y", d_model * tokens}};
  b.layers = {
      {"fc1", LayerRole::Linear, {"x"}, "h"},
      {"act", LayerRole::Activation, {"h"}, "a"},
      {"fc2", LayerRole::Linear, {"a"}, "y"},
  };
  return b;
}

BlockSpec activation_linear(std::uint64_t d_model, std::uint64_t tokens) {
  BlockSpec b;
  b.name = "act+linear " + dims(tokens, d_model);
  b.tensors = {{"x", d_model * tokens}, {"a", d_model * tokens}, {"y", d_model * tokens}};
  b.layers = {
      {"act", LayerRole::Activation, {"x"}, "a"},
      {"fc", LayerRole::Linear, {"a"}, "y"},
  };
  return b;
}

BlockSpec geglu_block(std::uint64_t d_model, std::uint64_t hidden, std::uint64_t tokens) {
  BlockSpec b;
  b.name = "geglu " + dims(tokens, d_model) + " -> " + std::to_string(hidden);
  b.tensors = {{"x", d_model * tokens},
               {"g", hidden * tokens},
               {"u", hidden * tokens},
               {"a", hidden * tokens},
               {"y", hidden * tokens}};
  b.layers = {
      {"gate_proj", LayerRole::Linear, {"x"}, "g"},
      {"up_proj", LayerRole::Linear, {"x"}, "u"},
      {"act", LayerRole::Activation, {"g"}, "a"},
      {"mul", LayerRole::Multiply, {"a", "u"}, "y"},
  };
  return b;
}

BlockSpec plain_activation(std::uint64_t elements) {
  BlockSpec b;
  b.name = "plain activation " + std::to_string(elements);
  b.tensors = {{"x", elements}, {"a", elements}};
  b.layers = {{"act", LayerRole::Activation, {"x"}, "a"}};
  return b;
}

BlockSpec activation_into_add(std::uint64_t d_model, std::uint64_t tokens) {
  BlockSpec b;
  b.name = "act+add " + dims(tokens, d_model);
  b.tensors = {{"x", d_model * tokens}, {"r", d_model * tokens}, {"a", d_model * tokens}, {"y", d_model * tokens}};
  b.layers = {
      {"act", LayerRole::Activation, {"x"}, "a"},
      {"add", LayerRole::Add, {"a", "r"}, "y", false},
  };
  return b;
}

BlockSpec transformer(std::uint64_t layers, std::uint64_t d_model, std::uint64_t heads, std::uint64_t expansion,
                      std::uint64_t tokens) {
  const std::uint64_t d = d_model * tokens;
  const std::uint64_t hidden = expansion * d;
  BlockSpec b;
  b.name = "transformer " + std::to_string(layers) + " layers, d=" + std::to_string(d_model) +
           ", tokens=" + std::to_string(tokens);
  b.repeat = layers;
  b.tensors = {{"x", d},  {"n1", d}, {"q", d},      {"k", d},      {"v", d},  {"lse", heads * tokens},
               {"o", d},  {"p", d},  {"r1", d},     {"n2", d},     {"h", hidden},
               {"a", hidden}, {"m", d}, {"out", d}};
  b.layers = {
      {"ln1", LayerRole::Norm, {"x"}, "n1"},
      {"q_proj", LayerRole::Linear, {"n1"}, "q"},
      {"k_proj", LayerRole::Linear, {"n1"}, "k"},
      {"v_proj", LayerRole::Linear, {"n1"}, "v"},
      {"attention", LayerRole::Attention, {"q", "k", "v", "o", "lse"}, "o"},
      {"o_proj", LayerRole::Linear, {"o"}, "p"},
      {"residual1", LayerRole::Add, {"x", "p"}, "r1", false},
      {"ln2", LayerRole::Norm, {"r1"}, "n2"},
      {"fc1", LayerRole::Linear, {"n2"}, "h"},
      {"act", LayerRole::Activation, {"h"}, "a"},
      {"fc2", LayerRole::Linear, {"a"}, "m"},
      {"residual2", LayerRole::Add, {"r1", "m"}, "out", false},
  };
  return b;
}

}  // namespace presets

BlockSpec block_from_record(const KeyValueRecord& record) {
  const auto block = record.require("block");
  const auto d_model = static_cast<std::uint64_t>(record.get_int("d_model", 1024));
  const auto tokens = static_cast<std::uint64_t>(record.get_int("tokens", 1 << 15));
  const auto expansion = static_cast<std::uint64_t>(record.get_int("expansion", 4));
  if (block == "mlp") return presets::mlp_block(d_model, expansion, tokens);
  if (block == "act-linear") return presets::activation_linear(d_model, tokens);
  if (block == "geglu") {
    return presets::geglu_block(d_model, static_cast<std::uint64_t>(record.get_int("hidden", expansion * d_model)),
                                tokens);
  }
  if (block == "plain") return presets::plain_activation(static_cast<std::uint64_t>(record.get_int("elements", tokens)));
  if (block == "act-add") return presets::activation_into_add(d_model, tokens);
  if (block == "transformer") {
    return presets::transformer(static_cast<std::uint64_t>(record.get_int("layers", 12)), d_model,
                                static_cast<std::uint64_t>(record.get_int("heads", 12)), expansion, tokens);
  }
  throw std::invalid_argument("unknown block: " + block);
}

}  // namespace invact
