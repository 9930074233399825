// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ddpt/autograd.hpp"
#include "ddpt/corpus.hpp"
#include "ddpt/nn.hpp"
#include "ddpt/params.hpp"
#include "ddpt/rng.hpp"
#include "ddpt/text.hpp"

namespace ddpt {

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_positions = 128;

  void validate() const;
};

// Small encoder-decoder used as the frozen language model. The output
// projection is tied to the embedding table ("embed"), so the space the LM
// reads prompts in is also the space nearest-word lookups search.
struct LanguageModel {
  LmConfig config;
  ParamSet params;

  const Tensor& embedding_table() const { return params["embed"]; }
  bool frozen() const { return params.all_frozen(); }
};

LanguageModel init_lm(const LmConfig& config, Rng& rng);

// Row gather from an embedding table.
Tensor embed(const Tensor& table, std::span<const TokenId> ids);
ad::Var embed(const nn::Bound& params, std::span<const TokenId> ids);

// 1 for real tokens, 0 for pad, over context ids followed by
// `instruction_len` always-visible positions.
std::vector<std::uint8_t> encoder_mask(std::span<const TokenId> context, std::size_t instruction_len);

// Encoder over arbitrary real-valued input rows (not only token embeddings).
ad::Var encode(const nn::Bound& params, const LmConfig& config, ad::Var encoder_embeds,
               std::span<const std::uint8_t> mask);
// Decoder hidden states, one row per decoder token.
ad::Var decode_hidden(const nn::Bound& params, const LmConfig& config, ad::Var memory,
                      std::span<const std::uint8_t> mask, std::span<const TokenId> decoder_tokens);
ad::Var output_logits(const nn::Bound& params, ad::Var hidden);

// Logits [len(decoder_tokens) x V]; an empty mask means every encoder row is visible.
ad::Var lm_forward(const nn::Bound& params, const LmConfig& config, ad::Var encoder_embeds,
                   std::span<const std::uint8_t> mask, std::span<const TokenId> decoder_tokens);
Tensor lm_forward(const LanguageModel& model, const Tensor& encoder_embeds, std::span<const std::uint8_t> mask,
                  std::span<const TokenId> decoder_tokens);

ad::Var lm_loss(ad::Var logits, std::span<const TokenId> targets);

// Decoder input is [begin] + instruction + target[:-1]; the row at
// `first_target` and the ones after it predict the target tokens in order.
struct TeacherForcing {
  std::vector<TokenId> decoder_input;
  std::vector<TokenId> targets;
  std::size_t first_target = 0;

  static TeacherForcing build(std::span<const TokenId> instruction, std::span<const TokenId> target);
};

// Cross-entropy over target positions only; encoder input is
// concat(context_embeds, embed(instruction)).
ad::Var prompt_loss(const nn::Bound& params, const LmConfig& config, ad::Var context_embeds,
                    const PromptSample& sample);
double prompt_loss(const LanguageModel& model, const Tensor& context_embeds, const PromptSample& sample);

struct DecodeOptions {
  std::size_t max_len = 32;
  double repetition_penalty = 1.0;
  std::size_t no_repeat_ngram = 0;
};

// Logits for the next token given the tokens generated so far.
using NextLogits = std::function<std::vector<Scalar>(std::span<const TokenId> generated)>;

// Applies the repetition penalty and n-gram ban to `logits` in place.
void apply_decoding_constraints(std::vector<Scalar>& logits, std::span<const TokenId> generated,
                                const DecodeOptions& options);
// Greedy argmax decoding; stops at Vocab::kEnd (not included) or max_len.
std::vector<TokenId> greedy_decode(const NextLogits& next, const DecodeOptions& options);
std::vector<TokenId> generate(const LanguageModel& model, const Tensor& context_embeds, const PromptSample& sample,
                              const DecodeOptions& options);

struct LmTrainConfig {
  std::size_t max_epochs = 40;
  std::size_t batch_size = 8;
  double learning_rate = 2e-3;
  std::size_t patience = 10;
  double min_improvement = 1e-3;
};

struct LmTrainReport {
  std::vector<double> train_loss;
  std::vector<double> heldout_loss;
  std::size_t best_epoch = 0;
  double initial_train_loss = 0.0;
};

// Teacher-forced pretraining with early stopping on held-out loss. Returns
// the best parameters, frozen. `on_epoch` sees every epoch's model and may
// persist it; a non-finite loss or value raises TrainingError.
LanguageModel pretrain_lm(const std::vector<PromptSample>& train, const std::vector<PromptSample>& heldout,
                          const LmConfig& config, const LmTrainConfig& train_config, Rng& rng,
                          LmTrainReport* report = nullptr,
                          const std::function<void(const LanguageModel&, std::size_t)>& on_epoch = {});

double mean_prompt_loss(const LanguageModel& model, const std::vector<PromptSample>& samples);

}  // namespace ddpt
