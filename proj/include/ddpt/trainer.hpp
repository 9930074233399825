// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddpt/corpus.hpp"
#include "ddpt/denoiser.hpp"
#include "ddpt/diffusion.hpp"
#include "ddpt/lm.hpp"
#include "ddpt/rng.hpp"

namespace ddpt {

enum class Objective { LmOnly, LmPlusX0 };

// How the denoiser output becomes the LM's context: added to the base
// embedding as a direction, or used as the context embedding itself.
enum class DirectionMode { Additive, Absolute };

struct TrainConfig {
  std::size_t k = 3;
  std::size_t epochs = 30;
  double learning_rate = 1e-4;
  Objective objective = Objective::LmOnly;
  double x0_loss_weight = 1.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;
  // Each pass's base is a constant copy of the previous prediction; false
  // backpropagates through the whole k-pass chain.
  bool detach_chain = true;
  DirectionMode direction = DirectionMode::Additive;
  // Stop when loss improves by less than this fraction over `convergence_window`
  // epochs; zero or below runs every epoch.
  double convergence_tolerance = 0.0;
  std::size_t convergence_window = 5;
  bool track_gradient_coverage = false;

  void validate() const;
};

struct TrainReport {
  std::vector<double> lm_loss;
  std::vector<double> x0_loss;
  double wall_seconds = 0.0;
  std::string final_checkpoint;
  std::string lm_digest_before;
  std::string lm_digest_after;
  // Denoiser coordinates that never saw a nonzero gradient; filled when
  // track_gradient_coverage is set.
  std::size_t dead_coordinates = 0;
};

// What one pass of a step saw; filled only when a trace is requested.
struct PassTrace {
  std::size_t timestep = 0;
  Tensor base;
  Tensor prediction;
  double lm_loss = 0.0;
};

struct StepResult {
  // Mean over passes of the full objective.
  double loss = 0.0;
  double lm_loss = 0.0;
  double x0_loss = 0.0;
  std::vector<Tensor> grads;
  std::size_t lm_passes = 0;
  std::vector<PassTrace> passes;
};

std::pair<std::vector<TokenId>, std::vector<TokenId>> split_prompt(const PromptSample& sample);
PromptSample merge_prompt(const std::vector<TokenId>& context, const std::vector<TokenId>& instruction,
                          const std::vector<TokenId>& target);

// k perturb -> denoise -> score passes against the frozen LM, chaining each
// prediction in as the next pass's base, with gradients for every denoiser
// parameter.
StepResult ddpt_step(const Denoiser& denoiser, const LanguageModel& lm, const PromptSample& sample,
                     const NoiseSchedule& sched, const TrainConfig& config, Rng& rng, bool trace = false);

struct TrainHooks {
  // Called after every epoch with the current denoiser and report so far.
  std::function<void(const Denoiser&, const TrainReport&, std::size_t epoch)> on_epoch;
};

// Epoch loop over a seeded shuffle, one Adam step per batch. Verifies the LM
// is bit-identical afterwards.
std::pair<Denoiser, TrainReport> train(const std::vector<PromptSample>& dataset, Denoiser denoiser,
                                       const LanguageModel& lm, const NoiseSchedule& sched,
                                       const TrainConfig& config, const TrainHooks& hooks = {});

// Runs the sampling chain from noise and turns the result into the
// optimized context embedding (n_ctx x d_model).
Tensor optimize_prompt(const Denoiser& denoiser, const LanguageModel& lm, const PromptSample& sample,
                       const NoiseSchedule& sched, Rng& rng, ChainOptions options = {},
                       DirectionMode direction = DirectionMode::Additive);

}  // namespace ddpt
