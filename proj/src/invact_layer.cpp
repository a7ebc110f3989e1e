// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/invact_layer.hpp"

namespace invact {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Baseline: return "baseline";
    case Strategy::Bitset: return "bitset";
    case Strategy::SignBit: return "sign-bit";
    case Strategy::PrecisionBit: return "precision-bit";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "baseline") return Strategy::Baseline;
  if (text == "bitset") return Strategy::Bitset;
  if (text == "sign-bit" || text == "signbit") return Strategy::SignBit;
  if (text == "precision-bit" || text == "lsb") return Strategy::PrecisionBit;
  throw std::invalid_argument("unknown strategy: " + std::string(text));
}

std::string_view to_string(ElementFormat format) {
  switch (format) {
    case ElementFormat::Binary16: return "binary16";
    case ElementFormat::Binary32: return "binary32";
    case ElementFormat::Binary64: return "binary64";
  }
  return "unknown";
}

ElementFormat parse_element_format(std::string_view text) {
  if (text == "binary16" || text == "fp16" || text == "half") return ElementFormat::Binary16;
  if (text == "binary32" || text == "fp32" || text == "float") return ElementFormat::Binary32;
  if (text == "binary64" || text == "fp64" || text == "double") return ElementFormat::Binary64;
  throw std::invalid_argument("unknown element format: " + std::string(text));
}

std::size_t format_width(ElementFormat format) {
  switch (format) {
    case ElementFormat::Binary16: return 2;
    case ElementFormat::Binary32: return 4;
    case ElementFormat::Binary64: return 8;
  }
  return 0;
}

}  // namespace invact
