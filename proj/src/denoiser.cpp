// SPDX-License-Identifier: Apache-2.0
#include "ddpt/denoiser.hpp"

#include <cmath>
#include <string>

#include "ddpt/error.hpp"

namespace ddpt {

namespace {

constexpr double kInitStd = 0.02;

std::string block(std::size_t i) { return "block" + std::to_string(i); }

}  // namespace

DenoiserConfig DenoiserConfig::defaults_for(std::size_t n_ctx, std::size_t d_model) {
  DenoiserConfig cfg;
  cfg.n_ctx = n_ctx;
  cfg.d_model = d_model;
  cfg.d_low = d_model / 4;
  cfg.d_ff = 4 * cfg.d_low;
  return cfg;
}

void DenoiserConfig::validate() const {
  if (n_ctx == 0 || d_model == 0 || d_low == 0 || n_heads == 0 || d_ff == 0) {
    throw ConfigError("denoiser dimensions must be positive");
  }
  if (d_low >= d_model) {
    throw ConfigError("denoiser d_low (" + std::to_string(d_low) + ") must be below d_model (" +
                      std::to_string(d_model) + ")");
  }
  if (d_low % n_heads != 0) {
    throw ConfigError("denoiser d_low (" + std::to_string(d_low) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (d_low % 2 != 0) throw ConfigError("denoiser d_low must be even for the timestep embedding");
}

Tensor timestep_embedding(std::size_t t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("timestep embedding width must be even, got " + std::to_string(dim));
  Tensor out({1, dim});
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    const double angle = static_cast<double>(t) * freq;
    out[2 * i] = static_cast<Scalar>(std::sin(angle));
    out[2 * i + 1] = static_cast<Scalar>(std::cos(angle));
  }
  return out;
}

Denoiser init_denoiser(const DenoiserConfig& config, Rng& rng) {
  config.validate();
  Denoiser model{config, {}};
  auto& p = model.params;
  nn::add_linear(p, "down", config.d_model, config.d_low, rng, kInitStd);
  p.add("pos", rng.normal_tensor({config.n_ctx, config.d_low}, kInitStd));
  nn::add_linear(p, "time", config.d_low, config.d_low, rng, kInitStd);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    nn::add_layer_norm(p, block(i) + ".ln1", config.d_low);
    nn::add_attention(p, block(i) + ".attn", config.d_low, rng, kInitStd);
    nn::add_layer_norm(p, block(i) + ".ln2", config.d_low);
    nn::add_feed_forward(p, block(i) + ".ff", config.d_low, config.d_ff, rng, kInitStd);
  }
  nn::add_layer_norm(p, "ln_out", config.d_low);
  p.add("up.w", Tensor({config.d_low, config.d_model}));
  p.add("up.b", Tensor({1, config.d_model}));
  return model;
}

ad::Var denoise(const nn::Bound& p, const DenoiserConfig& config, ad::Var x_t, std::size_t t) {
  if (x_t.rows() != config.n_ctx || x_t.cols() != config.d_model) {
    throw ModelContractError("denoise: input " + shape_string(x_t.shape()) + " does not match configured [" +
                             std::to_string(config.n_ctx) + "x" + std::to_string(config.d_model) + "]");
  }
  auto& tape = x_t.tape();
  auto h = nn::linear(p, "down", x_t);
  h = ad::add(h, p["pos"]);
  auto time = nn::linear(p, "time", tape.constant(timestep_embedding(t, config.d_low)));
  h = ad::add_row(h, time);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string b = block(i);
    auto normed = nn::layer_norm(p, b + ".ln1", h);
    h = ad::add(h, nn::attention(p, b + ".attn", normed, normed, config.n_heads, {}, false));
    h = ad::add(h, nn::feed_forward(p, b + ".ff", nn::layer_norm(p, b + ".ln2", h)));
  }
  h = nn::layer_norm(p, "ln_out", h);
  return nn::linear(p, "up", h);
}

Tensor denoise(const Denoiser& model, const Tensor& x_t, std::size_t t) {
  ad::Tape tape(false);
  nn::Bound bound(tape, model.params);
  return denoise(bound, model.config, tape.constant(x_t), t).value();
}

}  // namespace ddpt
