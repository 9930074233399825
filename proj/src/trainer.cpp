// SPDX-License-Identifier: Apache-2.0
#include "ddpt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "ddpt/adam.hpp"
#include "ddpt/checkpoint.hpp"
#include "ddpt/error.hpp"

namespace ddpt {

void TrainConfig::validate() const {
  if (k < 1) throw ConfigError("train.k must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (objective == Objective::LmPlusX0 && !(x0_loss_weight >= 0.0)) {
    throw ConfigError("train.x0_loss_weight must be non-negative");
  }
}

std::pair<std::vector<TokenId>, std::vector<TokenId>> split_prompt(const PromptSample& sample) {
  return {sample.context, sample.instruction};
}

PromptSample merge_prompt(const std::vector<TokenId>& context, const std::vector<TokenId>& instruction,
                          const std::vector<TokenId>& target) {
  return PromptSample{context, instruction, target};
}

namespace {

void check_compatible(const Denoiser& denoiser, const LanguageModel& lm, const PromptSample& sample) {
  if (!lm.frozen()) throw ContractError("the language model must be frozen before prompt optimization");
  if (denoiser.config.d_model != lm.config.d_model) {
    throw ModelContractError("denoiser d_model " + std::to_string(denoiser.config.d_model) + " != LM d_model " +
                             std::to_string(lm.config.d_model));
  }
  if (sample.context.size() != denoiser.config.n_ctx) {
    throw ModelContractError("sample context has " + std::to_string(sample.context.size()) +
                             " tokens, denoiser expects " + std::to_string(denoiser.config.n_ctx));
  }
}

ad::Var mean_of(const std::vector<ad::Var>& terms) {
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, Scalar(1) / Scalar(terms.size()));
}

}  // namespace

StepResult ddpt_step(const Denoiser& denoiser, const LanguageModel& lm, const PromptSample& sample,
                     const NoiseSchedule& sched, const TrainConfig& config, Rng& rng, bool trace) {
  config.validate();
  check_compatible(denoiser, lm, sample);

  ad::Tape tape;
  nn::Bound dp(tape, denoiser.params);
  nn::Bound lp(tape, lm.params);
  const ad::Var context = embed(lp, sample.context);
  const Shape shape = context.shape();

  StepResult result;
  std::vector<ad::Var> lm_terms;
  std::vector<ad::Var> x0_terms;
  ad::Var base = context;
  for (std::size_t pass = 0; pass < config.k; ++pass) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(1, sched.steps));
    const Tensor noise = rng.normal_tensor(shape);
    const ad::Var source = config.detach_chain ? tape.constant(base.value()) : base;
    const auto signal = static_cast<Scalar>(std::sqrt(sched.alpha_bar[t]));
    const auto spread = static_cast<Scalar>(std::sqrt(1.0 - sched.alpha_bar[t]));
    Tensor scaled_noise = noise;
    for (auto& v : scaled_noise.data()) v *= spread;
    const ad::Var noisy = ad::add(ad::scale(source, signal), tape.constant(std::move(scaled_noise)));

    const ad::Var prediction = denoise(dp, denoiser.config, noisy, t);
    const ad::Var prompt = config.direction == DirectionMode::Additive ? ad::add(prediction, source) : prediction;
    const ad::Var lm_term = prompt_loss(lp, lm.config, prompt, sample);
    lm_terms.push_back(lm_term);
    if (config.objective == Objective::LmPlusX0) x0_terms.push_back(ad::mean_squared_error(prediction, context));
    if (trace) result.passes.push_back(PassTrace{t, source.value(), prediction.value(), lm_term.value().item()});
    base = prediction;
  }
  result.lm_passes = lm_terms.size();

  ad::Var lm_mean = mean_of(lm_terms);
  ad::Var objective = lm_mean;
  result.lm_loss = lm_mean.value().item();
  if (!x0_terms.empty()) {
    ad::Var x0_mean = mean_of(x0_terms);
    result.x0_loss = x0_mean.value().item();
    objective = ad::add(lm_mean, ad::scale(x0_mean, static_cast<Scalar>(config.x0_loss_weight)));
  }
  result.loss = objective.value().item();
  if (!std::isfinite(result.loss)) throw TrainingError("ddpt_step: non-finite loss");
  tape.backward(objective);
  result.grads = ad::gradients(tape, dp.vars());
  return result;
}

std::pair<Denoiser, TrainReport> train(const std::vector<PromptSample>& dataset, Denoiser denoiser,
                                       const LanguageModel& lm, const NoiseSchedule& sched,
                                       const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (!lm.frozen()) throw ContractError("train: the language model must be frozen");
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.lm_digest_before = params_digest(lm.params);

  Rng root(config.seed);
  Rng order_rng = root.fork(1);
  Rng step_rng = root.fork(2);
  AdamState adam = AdamState::for_params(denoiser.params, AdamConfig{config.learning_rate});
  std::vector<Tensor> coverage;
  if (config.track_gradient_coverage) {
    for (const auto& p : denoiser.params) coverage.emplace_back(p.value.shape());
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> objective_series;
  try {
    for (std::size_t epoch = 0; epoch < config.epochs && !dataset.empty(); ++epoch) {
      order_rng.shuffle(std::span<std::size_t>(order));
      double lm_sum = 0.0;
      double x0_sum = 0.0;
      double objective_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        std::vector<Tensor> grads;
        for (std::size_t i = start; i < stop; ++i) {
          StepResult step = ddpt_step(denoiser, lm, dataset[order[i]], sched, config, step_rng);
          lm_sum += step.lm_loss;
          x0_sum += step.x0_loss;
          objective_sum += step.loss;
          if (grads.empty()) {
            grads = std::move(step.grads);
          } else {
            for (std::size_t p = 0; p < grads.size(); ++p) {
              for (std::size_t j = 0; j < grads[p].size(); ++j) grads[p][j] += step.grads[p][j];
            }
          }
        }
        if (stop - start > 1) {
          const Scalar inv = Scalar(1) / Scalar(stop - start);
          for (auto& g : grads) {
            for (auto& v : g.data()) v *= inv;
          }
        }
        for (std::size_t p = 0; p < coverage.size(); ++p) {
          for (std::size_t j = 0; j < grads[p].size(); ++j) {
            coverage[p][j] = std::max(coverage[p][j], std::abs(grads[p][j]));
          }
        }
        adam_step(adam, denoiser.params, grads);
      }
      const double n = static_cast<double>(dataset.size());
      report.lm_loss.push_back(lm_sum / n);
      if (config.objective == Objective::LmPlusX0) report.x0_loss.push_back(x0_sum / n);
      objective_series.push_back(objective_sum / n);
      if (hooks.on_epoch) hooks.on_epoch(denoiser, report, epoch);

      const std::size_t w = config.convergence_window;
      if (config.convergence_tolerance > 0.0 && w > 0 && objective_series.size() > w) {
        const double before = objective_series[objective_series.size() - 1 - w];
        const double now = objective_series.back();
        if ((before - now) / std::abs(before) < config.convergence_tolerance) break;
      }
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("train: diverged: ") + e.what());
  }

  for (const auto& c : coverage) {
    for (auto v : c.data()) report.dead_coordinates += v == Scalar(0) ? 1 : 0;
  }
  report.lm_digest_after = params_digest(lm.params);
  if (report.lm_digest_after != report.lm_digest_before) {
    throw ContractError("train: frozen language model parameters changed during training");
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(denoiser), std::move(report)};
}

Tensor optimize_prompt(const Denoiser& denoiser, const LanguageModel& lm, const PromptSample& sample,
                       const NoiseSchedule& sched, Rng& rng, ChainOptions options, DirectionMode direction) {
  check_compatible(denoiser, lm, sample);
  const Shape shape{denoiser.config.n_ctx, denoiser.config.d_model};
  auto predict = [&denoiser](const Tensor& x_t, std::size_t t) { return denoise(denoiser, x_t, t); };
  Tensor sampled = sample_chain(predict, shape, sched, rng, options);
  if (direction == DirectionMode::Absolute) return sampled;
  Tensor optimized = embed(lm.embedding_table(), sample.context);
  for (std::size_t i = 0; i < optimized.size(); ++i) optimized[i] += sampled[i];
  return optimized;
}

}  // namespace ddpt
