// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ddpt {

#ifdef DDPT_SCALAR_FLOAT
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major array. Every extent is positive and the element count
// equals the product of the extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, std::vector<Scalar> data);

  static Tensor scalar(Scalar value);
  static Tensor matrix(std::size_t rows, std::size_t cols, Scalar fill = Scalar(0));
  static Tensor from_rows(std::initializer_list<std::initializer_list<Scalar>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Leading extent and the product of the remaining ones; every op in the
  // autograd layer views tensors as matrices this way.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }
  const std::vector<Scalar>& storage() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }
  Scalar& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Scalar at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<Scalar> row(std::size_t r);
  std::span<const Scalar> row(std::size_t r) const;

  Scalar item() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(Scalar value);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Scalar max_abs_diff(const Tensor& a, const Tensor& b);

namespace kernels {

// c (+)= op(a) * op(b) on row-major matrices; `accumulate` adds into c.
void gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& c,
          bool accumulate);

}  // namespace kernels

}  // namespace ddpt
