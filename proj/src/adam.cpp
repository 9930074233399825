// SPDX-License-Identifier: Apache-2.0
#include "ddpt/adam.hpp"

#include <cmath>

#include "ddpt/error.hpp"

namespace ddpt {

AdamState AdamState::for_params(const ParamSet& params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.value.shape());
    state.second_moment.emplace_back(p.value.shape());
  }
  return state;
}

void adam_step(AdamState& state, ParamSet& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients and " +
                         std::to_string(state.first_moment.size()) + " moment slots for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    if (p.frozen) throw ContractError("adam_step: parameter '" + p.name + "' is frozen");
    require_same_shape(p.value, grads[i], "adam_step");
    require_same_shape(p.value, state.first_moment[i], "adam_step");
  }

  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params.at(i).value.data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double gj = g[j];
      m[j] = static_cast<Scalar>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj);
      v[j] = static_cast<Scalar>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj);
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= static_cast<Scalar>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace ddpt
