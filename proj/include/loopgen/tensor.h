// Copyright 2026 The Loopgen Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LOOPGEN_TENSOR_H_
#define LOOPGEN_TENSOR_H_

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loopgen/error.h"

namespace loopgen {

using Shape = std::vector<std::size_t>;

// Cache-line aligned allocation. Vectorised reductions peel a prefix whose
// length depends on the buffer address, so unaligned storage would make
// summation order, and hence results, vary from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string ShapeString(const Shape& shape);

// Dense row-major array. Rank-2 tensors are channels x time throughout the
// model code.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), values_(NumElements(shape_), fill) {}
  Tensor(Shape shape, std::initializer_list<T> values)
      : Tensor(std::move(shape), AlignedVector<T>(values)) {}
  Tensor(Shape shape, const std::vector<T>& values)
      : Tensor(std::move(shape), AlignedVector<T>(values.begin(), values.end())) {}
  Tensor(Shape shape, AlignedVector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != NumElements(shape_)) {
      throw InvalidArgument("tensor: " + std::to_string(values_.size()) +
                            " values for shape " + ShapeString(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  const AlignedVector<T>& storage() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(std::size_t row, std::size_t col) {
    return values_[row * shape_[1] + col];
  }
  const T& at(std::size_t row, std::size_t col) const {
    return values_[row * shape_[1] + col];
  }

  void Fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  template <typename U>
  Tensor<U> Cast() const {
    AlignedVector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  AlignedVector<T> values_;
};

// A learnable array and its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void ZeroGrad() { grad = Tensor<T>(value.shape()); }
};

}  // namespace loopgen

#endif  // LOOPGEN_TENSOR_H_
