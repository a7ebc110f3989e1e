// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace invact {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
}

// Flat immutable array plus shape metadata. Copies share storage, which is
// how a layer keeps a reference to a tensor another layer also holds.
template <typename T>
class Tensor {
 public:
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;

  Tensor() : data_(std::make_shared<const Array>()) {}

  // The shape is read before `values` is moved into storage.
  explicit Tensor(Array values) : shape_{values.size()}, data_(std::make_shared<const Array>(std::move(values))) {}

  Tensor(Shape shape, Array values) : shape_(std::move(shape)), data_(std::make_shared<const Array>(std::move(values))) {
    if (element_count(shape_) != data_->size()) throw std::invalid_argument("Tensor: shape does not match data size");
  }

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return data_->size(); }
  const Array& values() const { return *data_; }
  std::span<const T> span() const { return {data_->data(), static_cast<std::size_t>(data_->size())}; }
  std::size_t bytes() const { return static_cast<std::size_t>(data_->size()) * sizeof(T); }

  bool shares_storage_with(const Tensor& other) const { return data_ == other.data_; }
  const void* storage_id() const { return data_.get(); }

 private:
  Shape shape_;
  std::shared_ptr<const Array> data_;
};

}  // namespace invact
