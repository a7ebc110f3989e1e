// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/indicator_codec.hpp"

#include <string>

namespace invact {

PackedBits::PackedBits(std::vector<std::uint8_t> storage, std::size_t length)
    : storage_(std::move(storage)), length_(length) {
  if (storage_.size() != (length_ + 7) / 8) {
    throw std::invalid_argument("PackedBits: " + std::to_string(storage_.size()) + " bytes cannot hold exactly " +
                                std::to_string(length_) + " bits");
  }
  if (const auto tail = length_ % 8; tail != 0 && (storage_.back() >> tail) != 0) {
    throw std::invalid_argument("PackedBits: padding bits are not zero");
  }
}

PackedBits pack(const std::vector<bool>& bits) {
  PackedBits packed(bits.size());
  std::uint8_t* out = packed.data();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out[i >> 3] = static_cast<std::uint8_t>(out[i >> 3] | (static_cast<unsigned>(bits[i]) << (i & 7)));
  }
  return packed;
}

std::vector<bool> unpack(const PackedBits& packed, std::size_t n) {
  if (n != packed.size()) {
    throw std::invalid_argument("unpack: requested " + std::to_string(n) + " bits from a " +
                                std::to_string(packed.size()) + "-bit array");
  }
  std::vector<bool> bits(n);
  const std::uint8_t* in = packed.data();
  for (std::size_t i = 0; i < n; ++i) bits[i] = (in[i >> 3] >> (i & 7)) & 1u;
  return bits;
}

std::vector<std::uint8_t> serialize(const PackedBits& packed) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + packed.byte_size());
  const auto length = static_cast<std::uint64_t>(packed.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(length >> (8 * i)));
  out.insert(out.end(), packed.storage().begin(), packed.storage().end());
  return out;
}

PackedBits deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw std::invalid_argument("deserialize: missing length prefix");
  std::uint64_t length = 0;
  for (int i = 0; i < 8; ++i) length |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if (length > (bytes.size() - 8) * 8) throw std::invalid_argument("deserialize: truncated payload");
  return PackedBits(std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end()), static_cast<std::size_t>(length));
}

}  // namespace invact
