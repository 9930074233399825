// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ddpt/tensor.hpp"

namespace ddpt {

struct Param {
  std::string name;
  Tensor value;
  bool frozen = false;
};

// Named, ordered collection of model weights. Order is insertion order and is
// what checkpoints, optimizers and gradient vectors index by.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor value);

  std::size_t size() const { return items_.size(); }
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const;

  Param& at(std::size_t i) { return items_.at(i); }
  const Param& at(std::size_t i) const { return items_.at(i); }
  Tensor& operator[](const std::string& name) { return items_[index_of(name)].value; }
  const Tensor& operator[](const std::string& name) const { return items_[index_of(name)].value; }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void set_frozen(bool frozen);
  bool all_frozen() const;
  std::size_t scalar_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Param> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ddpt
