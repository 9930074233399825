// SPDX-License-Identifier: Apache-2.0
#include "ddpt/diffusion.hpp"

#include <cmath>
#include <string>

#include "ddpt/error.hpp"

namespace ddpt {

void NoiseSchedule::check_timestep(std::size_t t, const char* what) const {
  if (t < 1 || t > steps) {
    throw TimestepError(std::string(what) + ": timestep " + std::to_string(t) + " outside [1, " +
                        std::to_string(steps) + "]");
  }
}

NoiseSchedule schedule_from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one timestep");
  NoiseSchedule s;
  s.steps = betas.size();
  s.beta.assign(1, 0.0);
  s.alpha.assign(1, 1.0);
  s.alpha_bar.assign(1, 1.0);
  s.sigma.assign(1, 0.0);
  for (std::size_t t = 1; t <= betas.size(); ++t) {
    const double b = betas[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta[" + std::to_string(t) + "] = " + std::to_string(b) + " not in (0, 1)");
    if (t > 1 && b < betas[t - 2]) throw ConfigError("beta schedule must be non-decreasing");
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - b));
  }
  for (std::size_t t = 1; t <= s.steps; ++t) {
    const double var = t == 1 ? 0.0 : (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
    s.sigma.push_back(std::sqrt(var));
  }
  return s;
}

NoiseSchedule build_linear_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1, got " + std::to_string(beta_start) + ", " +
                      std::to_string(beta_end));
  }
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return schedule_from_betas(betas);
}

Tensor forward_perturb(const Tensor& x0, std::size_t t, const Tensor& noise, const NoiseSchedule& sched) {
  sched.check_timestep(t, "forward_perturb");
  require_same_shape(x0, noise, "forward_perturb");
  const double signal = std::sqrt(sched.alpha_bar[t]);
  const double spread = std::sqrt(1.0 - sched.alpha_bar[t]);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(signal * x0[i] + spread * noise[i]);
  return out;
}

Tensor posterior_step_from_x0(const Tensor& x_t, const Tensor& x0_hat, std::size_t t, const Tensor& z,
                              const NoiseSchedule& sched) {
  sched.check_timestep(t, "posterior_step_from_x0");
  require_same_shape(x_t, x0_hat, "posterior_step_from_x0");
  require_same_shape(x_t, z, "posterior_step_from_x0");
  if (t == 1) return x0_hat;
  const double denom = 1.0 - sched.alpha_bar[t];
  const double coef_x0 = std::sqrt(sched.alpha_bar[t - 1]) * sched.beta[t] / denom;
  const double coef_xt = std::sqrt(sched.alpha[t]) * (1.0 - sched.alpha_bar[t - 1]) / denom;
  const double sigma = t == 1 ? 0.0 : sched.sigma[t];
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Scalar>(coef_x0 * x0_hat[i] + coef_xt * x_t[i] + sigma * z[i]);
  }
  return out;
}

Tensor eps_from_x0(const Tensor& x_t, const Tensor& x0_hat, std::size_t t, const NoiseSchedule& sched) {
  sched.check_timestep(t, "eps_from_x0");
  require_same_shape(x_t, x0_hat, "eps_from_x0");
  const double signal = std::sqrt(sched.alpha_bar[t]);
  const double spread = std::sqrt(1.0 - sched.alpha_bar[t]);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>((x_t[i] - signal * x0_hat[i]) / spread);
  return out;
}

Tensor reverse_step_eps(const Tensor& x_t, const Tensor& eps_hat, std::size_t t, const Tensor& z,
                        const NoiseSchedule& sched) {
  sched.check_timestep(t, "reverse_step_eps");
  require_same_shape(x_t, eps_hat, "reverse_step_eps");
  require_same_shape(x_t, z, "reverse_step_eps");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t]);
  const double eps_coef = (1.0 - sched.alpha[t]) / std::sqrt(1.0 - sched.alpha_bar[t]);
  const double sigma = t == 1 ? 0.0 : sched.sigma[t];
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Scalar>(inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]) + sigma * z[i]);
  }
  return out;
}

Tensor sample_chain(const X0Predictor& predict, const Shape& shape, const NoiseSchedule& sched, Rng& rng,
                    ChainOptions options) {
  Tensor x = rng.normal_tensor(shape);
  Tensor zero(shape);
  for (std::size_t t = sched.steps; t >= 1; --t) {
    Tensor x0_hat = predict(x, t);
    if (x0_hat.shape() != shape) {
      throw ModelContractError("sample_chain: predictor returned " + shape_string(x0_hat.shape()) + ", expected " +
                               shape_string(shape));
    }
    if (t > 1) {
      Tensor z = rng.normal_tensor(shape, options.noise_scale);
      x = posterior_step_from_x0(x, x0_hat, t, z, sched);
    } else {
      x = posterior_step_from_x0(x, x0_hat, t, zero, sched);
    }
  }
  return x;
}

}  // namespace ddpt
