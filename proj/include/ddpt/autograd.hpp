// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ddpt/params.hpp"
#include "ddpt/tensor.hpp"

namespace ddpt::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Accumulates the gradient contributions of one node into its inputs.
using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

// The computation record: an append-only list of executed operations in
// topological order. Leaves either reference caller-owned tensors (model
// weights) or own a copy (constants). Replaying the backward rules in reverse
// fills gradients for every node that requires one.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // `value` must outlive the tape. Frozen leaves never receive a gradient but
  // ops still propagate through them to their other inputs.
  Var leaf(const Tensor& value, bool trainable);
  Var constant(Tensor value);

  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Zero-initialized on first use; nullptr when `v` does not require a gradient.
  Tensor* grad_buffer(Var v);
  // nullptr when no gradient reached `v`.
  const Tensor* grad(Var v) const;
  // Gradient of `v`, or zeros of its shape when none reached it.
  Tensor grad_or_zero(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }

 private:
  struct Node {
    const char* op = "";
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// Binds every parameter of `params` as a leaf; frozen parameters become
// non-trainable leaves.
std::vector<Var> bind(Tape& tape, const ParamSet& params);
// Gradients for `vars` in order, zeros where none arrived.
std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> vars);

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
// Adds a 1 x cols row to every row of `a`.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Scalar factor);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, Scalar eps = Scalar(1e-5));
Var softmax_rows(Var a);
// Multi-head scaled dot-product attention. `key_mask[j] == 0` hides key j
// from every query; `causal` hides keys after the query position.
Var attention(Var q, Var k, Var v, std::size_t heads, std::span<const std::uint8_t> key_mask, bool causal);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var table, std::span<const std::int32_t> ids);
Var sum(Var a);
Var mean(Var a);
// Mean over all elements of (a - b)^2.
Var mean_squared_error(Var a, Var b);
// Mean over rows of -log softmax(logits)[row, target].
Var softmax_cross_entropy(Var logits, std::span<const std::int32_t> targets);

inline Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

}  // namespace ddpt::ad
