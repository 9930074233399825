// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ddpt/rng.hpp"
#include "ddpt/tensor.hpp"

namespace ddpt {

// Per-timestep tables, 1-indexed: entry 0 describes the clean sample
// (beta 0, alpha_bar 1, sigma 0) so alpha_bar[t - 1] is always defined.
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  // Reverse-step noise scale: sqrt of the posterior variance, sigma[1] == 0.
  std::vector<double> sigma;

  void check_timestep(std::size_t t, const char* what) const;
};

NoiseSchedule build_linear_schedule(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);
NoiseSchedule schedule_from_betas(const std::vector<double>& betas);

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise
Tensor forward_perturb(const Tensor& x0, std::size_t t, const Tensor& noise, const NoiseSchedule& sched);

// Mean of q(x_{t-1} | x_t, x0_hat) plus sigma_t * z. At t = 1 the result is x0_hat and `z` is ignored.
Tensor posterior_step_from_x0(const Tensor& x_t, const Tensor& x0_hat, std::size_t t, const Tensor& z,
                              const NoiseSchedule& sched);

// Noise that would have produced x_t from x0_hat.
Tensor eps_from_x0(const Tensor& x_t, const Tensor& x0_hat, std::size_t t, const NoiseSchedule& sched);

// The noise-prediction form of the reverse step.
Tensor reverse_step_eps(const Tensor& x_t, const Tensor& eps_hat, std::size_t t, const Tensor& z,
                        const NoiseSchedule& sched);

// Returns the model's estimate of the clean sample for (x_t, t).
using X0Predictor = std::function<Tensor(const Tensor& x_t, std::size_t t)>;

struct ChainOptions {
  // Multiplies every sigma_t; 0 makes the chain deterministic after x_T.
  double noise_scale = 1.0;
};

// x_T ~ N(0, I), then t = T..1 posterior steps driven by `predict`.
Tensor sample_chain(const X0Predictor& predict, const Shape& shape, const NoiseSchedule& sched, Rng& rng,
                    ChainOptions options = {});

}  // namespace ddpt
