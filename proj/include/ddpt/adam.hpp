// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddpt/params.hpp"

namespace ddpt {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moments for each parameter of one ParamSet, plus the step
// counter used for bias correction.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_params(const ParamSet& params, AdamConfig config);
};

// Bias-corrected Adam update of every parameter in place. Refuses to touch a
// frozen parameter.
void adam_step(AdamState& state, ParamSet& params, std::span<const Tensor> grads);

}  // namespace ddpt
