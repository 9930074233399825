// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "ddpt/autograd.hpp"
#include "ddpt/nn.hpp"
#include "ddpt/params.hpp"
#include "ddpt/rng.hpp"

namespace ddpt {

struct DenoiserConfig {
  std::size_t n_ctx = 8;
  std::size_t d_model = 64;
  std::size_t d_low = 16;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 64;

  // d_low = d_model / 4 and d_ff = 4 * d_low.
  static DenoiserConfig defaults_for(std::size_t n_ctx, std::size_t d_model);
  void validate() const;
};

// Down-projection into a d_low bottleneck, a bidirectional transformer trunk
// conditioned on the timestep, and an up-projection back to d_model. The
// up-projection starts at zero so a fresh model predicts the zero direction.
struct Denoiser {
  DenoiserConfig config;
  ParamSet params;
};

// Interleaved [sin, cos] pairs with frequencies 10000^(-2i / dim).
Tensor timestep_embedding(std::size_t t, std::size_t dim);

Denoiser init_denoiser(const DenoiserConfig& config, Rng& rng);

// Recorded forward pass; `x_t` is n_ctx x d_model.
ad::Var denoise(const nn::Bound& params, const DenoiserConfig& config, ad::Var x_t, std::size_t t);
// Inference without gradient bookkeeping.
Tensor denoise(const Denoiser& model, const Tensor& x_t, std::size_t t);

}  // namespace ddpt
