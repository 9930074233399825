// SPDX-License-Identifier: Apache-2.0
#include "ddpt/params.hpp"

#include <algorithm>

#include "ddpt/error.hpp"

namespace ddpt {

Tensor& ParamSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, items_.size());
  items_.push_back(Param{std::move(name), std::move(value), false});
  return items_.back().value;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamSet::set_frozen(bool frozen) {
  for (auto& p : items_) p.frozen = frozen;
}

bool ParamSet::all_frozen() const {
  return std::all_of(items_.begin(), items_.end(), [](const Param& p) { return p.frozen; });
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.items_.size() != b.items_.size()) return false;
  for (std::size_t i = 0; i < a.items_.size(); ++i) {
    if (a.items_[i].name != b.items_[i].name || !(a.items_[i].value == b.items_[i].value)) return false;
  }
  return true;
}

}  // namespace ddpt
