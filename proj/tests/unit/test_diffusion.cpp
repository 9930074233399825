// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ddpt/diffusion.hpp"
#include "ddpt/error.hpp"
#include "oracles.hpp"

using namespace ddpt;

namespace {

Tensor constant_tensor(Shape s, double v) { return Tensor(std::move(s), static_cast<Scalar>(v)); }

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("schedule construction") {
  SUBCASE("single step") {
    const auto s = build_linear_schedule(1, 0.5, 0.5);
    CHECK(s.alpha_bar[1] == 0.5);
    CHECK(s.sigma[1] == 0.0);
  }
  SUBCASE("default 2000-step schedule") {
    const auto s = build_linear_schedule(2000);
    CHECK(s.alpha_bar[1] == 1.0 - 1e-4);
    long double product = 1;
    for (std::size_t t = 1; t <= 2000; ++t) {
      const long double beta = 1e-4L + (0.02L - 1e-4L) * static_cast<long double>(t - 1) / 1999.0L;
      CHECK(std::abs(static_cast<double>(beta) - s.beta[t]) < 1e-15);
      product *= 1 - beta;
    }
    CHECK(s.alpha_bar[2000] < 1e-6);
    CHECK(std::abs(static_cast<double>(product) - s.alpha_bar[2000]) < 1e-15);
    for (std::size_t t = 1; t < 2000; ++t) {
      CHECK(s.alpha_bar[t + 1] < s.alpha_bar[t]);
      CHECK(s.beta[t + 1] >= s.beta[t]);
    }
  }
  SUBCASE("posterior variance") {
    const auto s = build_linear_schedule(30, 1e-3, 0.1);
    for (std::size_t t = 2; t <= 30; ++t) {
      const double expected = (1 - s.alpha_bar[t - 1]) / (1 - s.alpha_bar[t]) * s.beta[t];
      CHECK(std::abs(s.sigma[t] * s.sigma[t] - expected) < 1e-15);
    }
  }
  SUBCASE("invalid bounds") {
    CHECK_THROWS_AS(build_linear_schedule(0), ConfigError);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.03, 0.02), ConfigError);
    CHECK_THROWS_AS(build_linear_schedule(10, 1e-4, 1.0), ConfigError);
  }
}

TEST_CASE("forward perturbation") {
  const auto s = build_linear_schedule(100);
  Rng rng(1);
  const Tensor x0 = rng.normal_tensor({3, 4});
  SUBCASE("zero noise scales the clean sample") {
    const Tensor xt = forward_perturb(x0, 40, Tensor({3, 4}), s);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(xt[i] == static_cast<Scalar>(std::sqrt(s.alpha_bar[40])) * x0[i]);
  }
  SUBCASE("alpha_bar of one is the identity") {
    const auto id = schedule_from_betas({1e-300});
    const Tensor xt = forward_perturb(x0, 1, rng.normal_tensor({3, 4}), id);
    CHECK(max_abs_diff(xt, x0) < 1e-12);
  }
  SUBCASE("timestep bounds") {
    CHECK_THROWS_AS(forward_perturb(x0, 0, x0, s), TimestepError);
    CHECK_THROWS_AS(forward_perturb(x0, 101, x0, s), TimestepError);
    CHECK_THROWS_AS(forward_perturb(x0, 1, Tensor({2, 2}), s), DimensionError);
  }
}

TEST_CASE("marginal moments at t = T") {
  const auto s = build_linear_schedule(2000);
  const Tensor x0({1, 1}, std::vector<Scalar>{Scalar(1.7)});
  Rng rng(2);
  const std::size_t n = 100000;
  double sum = 0;
  double sum_sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = forward_perturb(x0, 2000, rng.normal_tensor({1, 1}), s)[0];
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double expected_var = 1 - s.alpha_bar[2000];
  const double mean_se = std::sqrt(expected_var / n);
  const double var_se = expected_var * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(mean - std::sqrt(s.alpha_bar[2000]) * 1.7) < 3 * mean_se);
  CHECK(std::abs(var - expected_var) < 3 * var_se);
}

TEST_CASE("marginal moments at an intermediate step") {
  const auto s = build_linear_schedule(200);
  const Tensor x0({1, 1}, std::vector<Scalar>{Scalar(-2.0)});
  Rng rng(3);
  const std::size_t n = 100000;
  double sum = 0;
  double sum_sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = forward_perturb(x0, 50, rng.normal_tensor({1, 1}), s)[0];
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double expected_var = 1 - s.alpha_bar[50];
  CHECK(std::abs(mean - std::sqrt(s.alpha_bar[50]) * -2.0) < 3 * std::sqrt(expected_var / n));
  CHECK(std::abs(var - expected_var) < 3 * expected_var * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("posterior step examples") {
  SUBCASE("hand-evaluated two-step schedule") {
    const auto s = schedule_from_betas({0.1, 0.2});
    const double ab1 = 0.9;
    const double ab2 = 0.9 * 0.8;
    const double mu = std::sqrt(ab1) * 0.2 / (1 - ab2) * 0.5 + std::sqrt(0.8) * (1 - ab1) / (1 - ab2) * 1.0;
    const Tensor out = posterior_step_from_x0(constant_tensor({1, 1}, 1.0), constant_tensor({1, 1}, 0.5), 2,
                                              Tensor({1, 1}), s);
    CHECK(std::abs(out[0] - mu) < 1e-15);
    const double sigma2 = (1 - ab1) / (1 - ab2) * 0.2;
    CHECK(std::abs(s.sigma[2] - std::sqrt(sigma2)) < 1e-15);
    const Tensor noisy = posterior_step_from_x0(constant_tensor({1, 1}, 1.0), constant_tensor({1, 1}, 0.5), 2,
                                                constant_tensor({1, 1}, 1.0), s);
    CHECK(std::abs(noisy[0] - (mu + std::sqrt(sigma2))) < 1e-15);
  }
  SUBCASE("t = 1 returns the clean estimate and ignores z") {
    const auto s = build_linear_schedule(10);
    Rng rng(4);
    const Tensor x0 = rng.normal_tensor({2, 3});
    const Tensor out = posterior_step_from_x0(rng.normal_tensor({2, 3}), x0, 1, rng.normal_tensor({2, 3}), s);
    CHECK(out == x0);
  }
  SUBCASE("t = 0 is refused") {
    const auto s = build_linear_schedule(10);
    CHECK_THROWS_AS(posterior_step_from_x0(Tensor({1, 1}), Tensor({1, 1}), 0, Tensor({1, 1}), s), TimestepError);
  }
}

TEST_CASE("noise-prediction step") {
  const auto s = build_linear_schedule(50);
  Rng rng(5);
  SUBCASE("zero noise prediction divides by sqrt(alpha)") {
    const Tensor x = rng.normal_tensor({2, 2});
    const Tensor out = reverse_step_eps(x, Tensor({2, 2}), 17, Tensor({2, 2}), s);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(out[i] - x[i] / std::sqrt(s.alpha[17])) < 1e-14);
  }
  SUBCASE("agrees with the posterior form on 1000 random inputs") {
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      const std::size_t t = rng.uniform_int(1, 50);
      const Tensor xt = rng.normal_tensor({2, 3}, 3.0);
      const Tensor x0 = rng.normal_tensor({2, 3}, 3.0);
      const Tensor z = rng.normal_tensor({2, 3});
      const Tensor a = posterior_step_from_x0(xt, x0, t, z, s);
      const Tensor b = reverse_step_eps(xt, eps_from_x0(xt, x0, t, s), t, z, s);
      worst = std::max(worst, static_cast<double>(max_abs_diff(a, b)));
    }
    CHECK(worst < 1e-10);
  }
  SUBCASE("eps conversion inverts the forward process") {
    const Tensor x0 = rng.normal_tensor({3, 3});
    const Tensor eps = rng.normal_tensor({3, 3});
    const Tensor xt = forward_perturb(x0, 33, eps, s);
    CHECK(max_abs_diff(eps_from_x0(xt, x0, 33, s), eps) < 1e-12);
  }
}

TEST_CASE("oracle denoiser chain reconstructs the clean sample") {
  Rng rng(6);
  const Tensor x0 = rng.normal_tensor({4, 5});
  SUBCASE("posterior form, 10 steps, sigma forced to zero") {
    const auto s = build_linear_schedule(10, 0.05, 0.3);
    Tensor x = rng.normal_tensor({4, 5});
    for (std::size_t t = 10; t >= 1; --t) x = posterior_step_from_x0(x, x0, t, Tensor({4, 5}), s);
    CHECK(max_abs_diff(x, x0) < 1e-8);
  }
  SUBCASE("noise-prediction form, 10 steps") {
    const auto s = build_linear_schedule(10, 0.05, 0.3);
    Tensor x = forward_perturb(x0, 10, rng.normal_tensor({4, 5}), s);
    for (std::size_t t = 10; t >= 1; --t) x = reverse_step_eps(x, eps_from_x0(x, x0, t, s), t, Tensor({4, 5}), s);
    CHECK(max_abs_diff(x, x0) < 1e-8);
  }
  SUBCASE("one posterior step at t = 1 from any x_t") {
    const auto s = build_linear_schedule(10);
    const Tensor out = posterior_step_from_x0(rng.normal_tensor({4, 5}, 10.0), x0, 1, Tensor({4, 5}), s);
    CHECK(max_abs_diff(out, x0) == 0.0);
  }
}

TEST_CASE("sampling chain") {
  const auto s = build_linear_schedule(60);
  SUBCASE("constant predictor with noise off converges to the constant") {
    Rng rng(7);
    const Tensor c = constant_tensor({3, 2}, -0.8);
    const Tensor out = sample_chain([&](const Tensor&, std::size_t) { return c; }, {3, 2}, s, rng, {0.0});
    CHECK(max_abs_diff(out, c) < 1e-12);
  }
  SUBCASE("visits timesteps T..1 in order") {
    Rng rng(8);
    std::vector<std::size_t> seen;
    sample_chain(
        [&](const Tensor& x, std::size_t t) {
          seen.push_back(t);
          return x;
        },
        {1, 2}, s, rng);
    REQUIRE(seen.size() == 60);
    for (std::size_t i = 0; i < 60; ++i) CHECK(seen[i] == 60 - i);
  }
  SUBCASE("fixed seed is bit-identical") {
    auto run = [&] {
      Rng rng(9);
      return sample_chain([](const Tensor& x, std::size_t) { return x; }, {2, 2}, s, rng);
    };
    CHECK(run() == run());
  }
  SUBCASE("wrong predictor shape is a contract error") {
    Rng rng(10);
    CHECK_THROWS_AS(sample_chain([](const Tensor&, std::size_t) { return Tensor({1, 1}); }, {2, 2}, s, rng),
                    ModelContractError);
  }
}

}  // TEST_SUITE
