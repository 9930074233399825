// SPDX-License-Identifier: Apache-2.0
#include "ddpt/nn.hpp"

#include <cmath>

namespace ddpt::nn {

void add_linear(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                double stddev) {
  params.add(prefix + ".w", rng.normal_tensor({in, out}, stddev));
  params.add(prefix + ".b", Tensor({1, out}));
}

void add_layer_norm(ParamSet& params, const std::string& prefix, std::size_t width) {
  params.add(prefix + ".g", Tensor({1, width}, Scalar(1)));
  params.add(prefix + ".b", Tensor({1, width}));
}

void add_attention(ParamSet& params, const std::string& prefix, std::size_t width, Rng& rng, double stddev) {
  for (const char* name : {".wq", ".wk", ".wv", ".wo"}) {
    params.add(prefix + name, rng.normal_tensor({width, width}, stddev));
  }
}

void add_feed_forward(ParamSet& params, const std::string& prefix, std::size_t width, std::size_t hidden, Rng& rng,
                      double stddev) {
  add_linear(params, prefix + ".in", width, hidden, rng, stddev);
  add_linear(params, prefix + ".out", hidden, width, rng, stddev);
}

ad::Var linear(const Bound& p, const std::string& prefix, ad::Var x) {
  return ad::linear(x, p[prefix + ".w"], p[prefix + ".b"]);
}

ad::Var layer_norm(const Bound& p, const std::string& prefix, ad::Var x) {
  return ad::layer_norm(x, p[prefix + ".g"], p[prefix + ".b"]);
}

ad::Var attention(const Bound& p, const std::string& prefix, ad::Var x, ad::Var memory, std::size_t heads,
                  std::span<const std::uint8_t> memory_mask, bool causal) {
  auto q = ad::matmul(x, p[prefix + ".wq"]);
  auto k = ad::matmul(memory, p[prefix + ".wk"]);
  auto v = ad::matmul(memory, p[prefix + ".wv"]);
  auto mixed = ad::attention(q, k, v, heads, memory_mask, causal);
  return ad::matmul(mixed, p[prefix + ".wo"]);
}

ad::Var feed_forward(const Bound& p, const std::string& prefix, ad::Var x) {
  return linear(p, prefix + ".out", ad::gelu(linear(p, prefix + ".in", x)));
}

Tensor sinusoidal_positions(std::size_t length, std::size_t width) {
  Tensor table = Tensor::matrix(length, width);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      table.at(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return table;
}

}  // namespace ddpt::nn
