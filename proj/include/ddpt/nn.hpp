// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddpt/autograd.hpp"
#include "ddpt/params.hpp"
#include "ddpt/rng.hpp"

// Transformer building blocks shared by the denoiser and the toy LM. Blocks
// are pre-norm: x + sublayer(layer_norm(x)).
namespace ddpt::nn {

// Parameters of one ParamSet bound to a tape, looked up by name.
class Bound {
 public:
  Bound(ad::Tape& tape, const ParamSet& params) : params_(&params), vars_(ad::bind(tape, params)) {}

  ad::Var operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }
  const std::vector<ad::Var>& vars() const { return vars_; }

 private:
  const ParamSet* params_;
  std::vector<ad::Var> vars_;
};

void add_linear(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                double stddev);
void add_layer_norm(ParamSet& params, const std::string& prefix, std::size_t width);
void add_attention(ParamSet& params, const std::string& prefix, std::size_t width, Rng& rng, double stddev);
void add_feed_forward(ParamSet& params, const std::string& prefix, std::size_t width, std::size_t hidden, Rng& rng,
                      double stddev);

ad::Var linear(const Bound& p, const std::string& prefix, ad::Var x);
ad::Var layer_norm(const Bound& p, const std::string& prefix, ad::Var x);
// Projects queries from `x` and keys/values from `memory`.
ad::Var attention(const Bound& p, const std::string& prefix, ad::Var x, ad::Var memory, std::size_t heads,
                  std::span<const std::uint8_t> memory_mask, bool causal);
ad::Var feed_forward(const Bound& p, const std::string& prefix, ad::Var x);

// Fixed sinusoidal position table, rows = positions.
Tensor sinusoidal_positions(std::size_t length, std::size_t width);

}  // namespace ddpt::nn
