// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace invact {

// Bit-packed boolean array: bit i lives at bit (i mod 8) of byte (i div 8).
// Bits past `size()` in the last byte are always zero.
class PackedBits {
 public:
  PackedBits() = default;
  explicit PackedBits(std::size_t length) : storage_((length + 7) / 8, 0), length_(length) {}

  // Throws std::invalid_argument when the byte count or padding bits are wrong.
  PackedBits(std::vector<std::uint8_t> storage, std::size_t length);

  std::size_t size() const { return length_; }
  std::size_t byte_size() const { return storage_.size(); }
  const std::vector<std::uint8_t>& storage() const { return storage_; }

  // Whole-byte access for kernels; they must keep padding bits clear.
  std::uint8_t* data() { return storage_.data(); }
  const std::uint8_t* data() const { return storage_.data(); }

  bool test(std::size_t i) const { return (storage_[i >> 3] >> (i & 7)) & 1u; }

  void set(std::size_t i, bool value) {
    const auto mask = static_cast<std::uint8_t>(1u << (i & 7));
    storage_[i >> 3] = static_cast<std::uint8_t>(value ? (storage_[i >> 3] | mask) : (storage_[i >> 3] & ~mask));
  }

  friend bool operator==(const PackedBits&, const PackedBits&) = default;

 private:
  std::vector<std::uint8_t> storage_;
  std::size_t length_ = 0;
};

PackedBits pack(const std::vector<bool>& bits);

// Throws std::invalid_argument when n differs from packed.size().
std::vector<bool> unpack(const PackedBits& packed, std::size_t n);

// Wire layout: 64-bit little-endian bit count, then the storage bytes.
std::vector<std::uint8_t> serialize(const PackedBits& packed);
PackedBits deserialize(std::span<const std::uint8_t> bytes);

// Storage formats for values that carry an embedded indicator.
template <typename T>
struct FormatTraits;

template <>
struct FormatTraits<float> {
  using Bits = std::uint32_t;
  static constexpr Bits kSignMask = 0x80000000u;
  static constexpr std::string_view kName = "binary32";
};

template <>
struct FormatTraits<double> {
  using Bits = std::uint64_t;
  static constexpr Bits kSignMask = 0x8000000000000000ull;
  static constexpr std::string_view kName = "binary64";
};

template <>
struct FormatTraits<Eigen::half> {
  using Bits = std::uint16_t;
  static constexpr Bits kSignMask = 0x8000u;
  static constexpr std::string_view kName = "binary16";
};

template <typename T>
concept IndicatorFormat = requires { typename FormatTraits<T>::Bits; };

// Scalar conversions that route binary16 through binary32.
template <typename T>
double to_double(T value) {
  if constexpr (std::is_same_v<T, Eigen::half>) {
    return static_cast<double>(static_cast<float>(value));
  } else {
    return static_cast<double>(value);
  }
}

template <typename T>
T from_double(double value) {
  if constexpr (std::is_same_v<T, Eigen::half>) {
    return static_cast<Eigen::half>(static_cast<float>(value));
  } else {
    return static_cast<T>(value);
  }
}

template <IndicatorFormat T>
typename FormatTraits<T>::Bits to_bits(T value) {
  return Eigen::numext::bit_cast<typename FormatTraits<T>::Bits>(value);
}

template <IndicatorFormat T>
T from_bits(typename FormatTraits<T>::Bits bits) {
  return Eigen::numext::bit_cast<T>(bits);
}

// Gap between |value| and the next representable magnitude above it.
template <IndicatorFormat T>
double ulp(T value) {
  const auto bits = static_cast<typename FormatTraits<T>::Bits>(to_bits(value) & ~FormatTraits<T>::kSignMask);
  const auto next = from_bits<T>(static_cast<typename FormatTraits<T>::Bits>(bits + 1));
  return to_double(next) - to_double(from_bits<T>(bits));
}

template <IndicatorFormat T>
bool sign_bit(T value) {
  return (to_bits(value) & FormatTraits<T>::kSignMask) != 0;
}

template <IndicatorFormat T>
T with_sign_bit(T magnitude, bool negative) {
  using Bits = typename FormatTraits<T>::Bits;
  const Bits bits = static_cast<Bits>(to_bits(magnitude) & ~FormatTraits<T>::kSignMask);
  return from_bits<T>(static_cast<Bits>(negative ? bits | FormatTraits<T>::kSignMask : bits));
}

template <IndicatorFormat T>
bool low_bit(T value) {
  return (to_bits(value) & 1u) != 0;
}

template <IndicatorFormat T>
T with_low_bit(T value, bool bit) {
  using Bits = typename FormatTraits<T>::Bits;
  const Bits bits = static_cast<Bits>((to_bits(value) & ~Bits{1}) | (bit ? Bits{1} : Bits{0}));
  return from_bits<T>(bits);
}

enum class IndicatorEmbedding { SignBit, Lsb };

template <IndicatorFormat T>
struct EncodedScalar {
  T value;
  IndicatorEmbedding embedding;
};

// Stores y - C as a non-negative magnitude whose sign bit is the indicator.
// (y = C, s = 1) encodes as negative zero. The C round trip is lossy by the
// rounding of y - C to the storage format.
template <IndicatorFormat T>
EncodedScalar<T> encode_sign_bit(double y, bool s, double c_min) {
  if (y < c_min - 1e-9) throw std::domain_error("encode_sign_bit: y below the activation minimum");
  const T magnitude = from_double<T>(std::fmax(y - c_min, 0.0));
  return {with_sign_bit(magnitude, s), IndicatorEmbedding::SignBit};
}

template <IndicatorFormat T>
std::pair<double, bool> decode_sign_bit(const EncodedScalar<T>& e, double c_min) {
  return {std::fabs(to_double(e.value)) + c_min, sign_bit(e.value)};
}

// Rounds y to the storage format and overwrites its lowest mantissa bit with s.
template <IndicatorFormat T>
EncodedScalar<T> encode_lsb(double y, bool s) {
  const T rounded = from_double<T>(y);
  if (!std::isfinite(to_double(rounded))) throw std::domain_error("encode_lsb: value not finite in format");
  return {with_low_bit(rounded, s), IndicatorEmbedding::Lsb};
}

template <IndicatorFormat T>
std::pair<double, bool> decode_lsb(const EncodedScalar<T>& e) {
  return {to_double(e.value), low_bit(e.value)};
}

}  // namespace invact
