// SPDX-License-Identifier: Apache-2.0
#include "ddpt/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "ddpt/adam.hpp"
#include "ddpt/error.hpp"

namespace ddpt {

namespace {

constexpr double kInitStd = 0.02;

std::string enc_block(std::size_t i) { return "enc" + std::to_string(i); }
std::string dec_block(std::size_t i) { return "dec" + std::to_string(i); }

const Tensor& position_table(std::size_t rows, std::size_t width) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, Tensor> cache;
  auto key = std::make_pair(rows, width);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, nn::sinusoidal_positions(rows, width)).first;
  return it->second;
}

// embeds * sqrt(d) + positions
ad::Var with_positions(ad::Var embeds, const LmConfig& config) {
  const std::size_t rows = embeds.rows();
  if (rows > config.max_positions) {
    throw ModelContractError("sequence of " + std::to_string(rows) + " rows exceeds max_positions " +
                             std::to_string(config.max_positions));
  }
  const Tensor& table = position_table(config.max_positions, config.d_model);
  Tensor pos({rows, config.d_model},
             std::vector<Scalar>(table.data().begin(), table.data().begin() + rows * config.d_model));
  auto& tape = embeds.tape();
  return ad::add(ad::scale(embeds, std::sqrt(Scalar(config.d_model))), tape.constant(std::move(pos)));
}

}  // namespace

void LmConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocab::kReservedCount)) throw ConfigError("LM vocab_size too small");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("LM d_model must be a positive multiple of n_heads");
  }
  if (encoder_layers == 0 || decoder_layers == 0 || d_ff == 0 || max_positions == 0) {
    throw ConfigError("LM layer counts and widths must be positive");
  }
}

LanguageModel init_lm(const LmConfig& config, Rng& rng) {
  config.validate();
  LanguageModel model{config, {}};
  auto& p = model.params;
  p.add("embed", rng.normal_tensor({config.vocab_size, config.d_model}, 1.0 / std::sqrt(double(config.d_model))));
  for (std::size_t i = 0; i < config.encoder_layers; ++i) {
    const auto b = enc_block(i);
    nn::add_layer_norm(p, b + ".ln1", config.d_model);
    nn::add_attention(p, b + ".self", config.d_model, rng, kInitStd);
    nn::add_layer_norm(p, b + ".ln2", config.d_model);
    nn::add_feed_forward(p, b + ".ff", config.d_model, config.d_ff, rng, kInitStd);
  }
  nn::add_layer_norm(p, "enc.ln_out", config.d_model);
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    const auto b = dec_block(i);
    nn::add_layer_norm(p, b + ".ln1", config.d_model);
    nn::add_attention(p, b + ".self", config.d_model, rng, kInitStd);
    nn::add_layer_norm(p, b + ".ln2", config.d_model);
    nn::add_attention(p, b + ".cross", config.d_model, rng, kInitStd);
    nn::add_layer_norm(p, b + ".ln3", config.d_model);
    nn::add_feed_forward(p, b + ".ff", config.d_model, config.d_ff, rng, kInitStd);
  }
  nn::add_layer_norm(p, "dec.ln_out", config.d_model);
  return model;
}

Tensor embed(const Tensor& table, std::span<const TokenId> ids) {
  if (ids.empty()) throw DimensionError("embed: empty token sequence");
  Tensor out = Tensor::matrix(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows()) {
      throw VocabularyError("embed: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                            std::to_string(table.rows()));
    }
    auto src = table.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

ad::Var embed(const nn::Bound& params, std::span<const TokenId> ids) { return ad::gather_rows(params["embed"], ids); }

std::vector<std::uint8_t> encoder_mask(std::span<const TokenId> context, std::size_t instruction_len) {
  std::vector<std::uint8_t> mask;
  mask.reserve(context.size() + instruction_len);
  for (auto id : context) mask.push_back(id == Vocab::kPad ? 0 : 1);
  mask.insert(mask.end(), instruction_len, 1);
  return mask;
}

ad::Var encode(const nn::Bound& p, const LmConfig& config, ad::Var encoder_embeds, std::span<const std::uint8_t> mask) {
  if (encoder_embeds.cols() != config.d_model) {
    throw ModelContractError("encode: input width " + std::to_string(encoder_embeds.cols()) + " != d_model " +
                             std::to_string(config.d_model));
  }
  auto h = with_positions(encoder_embeds, config);
  for (std::size_t i = 0; i < config.encoder_layers; ++i) {
    const auto b = enc_block(i);
    auto normed = nn::layer_norm(p, b + ".ln1", h);
    h = ad::add(h, nn::attention(p, b + ".self", normed, normed, config.n_heads, mask, false));
    h = ad::add(h, nn::feed_forward(p, b + ".ff", nn::layer_norm(p, b + ".ln2", h)));
  }
  return nn::layer_norm(p, "enc.ln_out", h);
}

ad::Var decode_hidden(const nn::Bound& p, const LmConfig& config, ad::Var memory, std::span<const std::uint8_t> mask,
                      std::span<const TokenId> decoder_tokens) {
  auto h = with_positions(embed(p, decoder_tokens), config);
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    const auto b = dec_block(i);
    auto normed = nn::layer_norm(p, b + ".ln1", h);
    h = ad::add(h, nn::attention(p, b + ".self", normed, normed, config.n_heads, {}, true));
    h = ad::add(h, nn::attention(p, b + ".cross", nn::layer_norm(p, b + ".ln2", h), memory, config.n_heads, mask,
                                 false));
    h = ad::add(h, nn::feed_forward(p, b + ".ff", nn::layer_norm(p, b + ".ln3", h)));
  }
  return nn::layer_norm(p, "dec.ln_out", h);
}

ad::Var output_logits(const nn::Bound& p, ad::Var hidden) { return ad::matmul_nt(hidden, p["embed"]); }

ad::Var lm_forward(const nn::Bound& p, const LmConfig& config, ad::Var encoder_embeds,
                   std::span<const std::uint8_t> mask, std::span<const TokenId> decoder_tokens) {
  if (!mask.empty() && mask.size() != encoder_embeds.rows()) {
    throw ModelContractError("lm_forward: mask length does not match encoder rows");
  }
  auto memory = encode(p, config, encoder_embeds, mask);
  return output_logits(p, decode_hidden(p, config, memory, mask, decoder_tokens));
}

Tensor lm_forward(const LanguageModel& model, const Tensor& encoder_embeds, std::span<const std::uint8_t> mask,
                  std::span<const TokenId> decoder_tokens) {
  ad::Tape tape(false);
  nn::Bound p(tape, model.params);
  return lm_forward(p, model.config, tape.constant(encoder_embeds), mask, decoder_tokens).value();
}

ad::Var lm_loss(ad::Var logits, std::span<const TokenId> targets) { return ad::softmax_cross_entropy(logits, targets); }

TeacherForcing TeacherForcing::build(std::span<const TokenId> instruction, std::span<const TokenId> target) {
  if (target.empty()) throw ContractError("teacher forcing needs a non-empty target");
  TeacherForcing tf;
  tf.decoder_input.push_back(Vocab::kBegin);
  tf.decoder_input.insert(tf.decoder_input.end(), instruction.begin(), instruction.end());
  tf.first_target = tf.decoder_input.size() - 1;
  tf.decoder_input.insert(tf.decoder_input.end(), target.begin(), target.end() - 1);
  tf.targets.assign(target.begin(), target.end());
  return tf;
}

ad::Var prompt_loss(const nn::Bound& p, const LmConfig& config, ad::Var context_embeds, const PromptSample& sample) {
  if (context_embeds.rows() != sample.context.size()) {
    throw ModelContractError("prompt_loss: " + std::to_string(context_embeds.rows()) + " context rows for a sample with " +
                             std::to_string(sample.context.size()) + " context tokens");
  }
  auto encoder_in = ad::concat_rows(context_embeds, embed(p, sample.instruction));
  const auto mask = encoder_mask(sample.context, sample.instruction.size());
  const auto tf = TeacherForcing::build(sample.instruction, sample.target);
  auto memory = encode(p, config, encoder_in, mask);
  auto hidden = decode_hidden(p, config, memory, mask, tf.decoder_input);
  auto rows = ad::slice_rows(hidden, tf.first_target, tf.targets.size());
  return lm_loss(output_logits(p, rows), tf.targets);
}

double prompt_loss(const LanguageModel& model, const Tensor& context_embeds, const PromptSample& sample) {
  ad::Tape tape(false);
  nn::Bound p(tape, model.params);
  return prompt_loss(p, model.config, tape.constant(context_embeds), sample).value().item();
}

double mean_prompt_loss(const LanguageModel& model, const std::vector<PromptSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += prompt_loss(model, embed(model.embedding_table(), s.context), s);
  return total / static_cast<double>(samples.size());
}

void apply_decoding_constraints(std::vector<Scalar>& logits, std::span<const TokenId> generated,
                                const DecodeOptions& options) {
  if (options.repetition_penalty > 1.0) {
    const std::set<TokenId> seen(generated.begin(), generated.end());
    const auto penalty = static_cast<Scalar>(options.repetition_penalty);
    for (auto id : seen) {
      auto& l = logits[static_cast<std::size_t>(id)];
      l = l > 0 ? l / penalty : l * penalty;
    }
  }
  const std::size_t n = options.no_repeat_ngram;
  if (n > 0 && generated.size() + 1 >= n) {
    const std::size_t prefix_len = n - 1;
    auto prefix = generated.subspan(generated.size() - prefix_len);
    for (std::size_t start = 0; start + n <= generated.size(); ++start) {
      if (std::equal(prefix.begin(), prefix.end(), generated.begin() + static_cast<std::ptrdiff_t>(start))) {
        logits[static_cast<std::size_t>(generated[start + prefix_len])] = -std::numeric_limits<Scalar>::infinity();
      }
    }
  }
}

std::vector<TokenId> greedy_decode(const NextLogits& next, const DecodeOptions& options) {
  if (options.max_len < 1) throw ConfigError("max_len must be >= 1");
  std::vector<TokenId> generated;
  while (generated.size() < options.max_len) {
    auto logits = next(generated);
    apply_decoding_constraints(logits, generated, options);
    // pad and begin are never emitted
    for (TokenId r : {Vocab::kPad, Vocab::kBegin}) {
      if (static_cast<std::size_t>(r) < logits.size()) logits[static_cast<std::size_t>(r)] = -std::numeric_limits<Scalar>::infinity();
    }
    TokenId best = Vocab::kEnd;
    Scalar best_logit = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (logits[i] > best_logit) {
        best_logit = logits[i];
        best = static_cast<TokenId>(i);
      }
    }
    if (best == Vocab::kEnd) break;
    generated.push_back(best);
  }
  return generated;
}

std::vector<TokenId> generate(const LanguageModel& model, const Tensor& context_embeds, const PromptSample& sample,
                              const DecodeOptions& options) {
  const auto mask = encoder_mask(sample.context, sample.instruction.size());
  Tensor memory;
  {
    ad::Tape tape(false);
    nn::Bound p(tape, model.params);
    auto encoder_in = ad::concat_rows(tape.constant(context_embeds), embed(p, sample.instruction));
    memory = encode(p, model.config, encoder_in, mask).value();
  }
  std::vector<TokenId> prefix{Vocab::kBegin};
  prefix.insert(prefix.end(), sample.instruction.begin(), sample.instruction.end());
  auto next = [&](std::span<const TokenId> generated) {
    std::vector<TokenId> tokens = prefix;
    tokens.insert(tokens.end(), generated.begin(), generated.end());
    ad::Tape tape(false);
    nn::Bound p(tape, model.params);
    auto hidden = decode_hidden(p, model.config, tape.constant(memory), mask, tokens);
    auto last = ad::slice_rows(hidden, tokens.size() - 1, 1);
    const auto& logits = output_logits(p, last).value();
    return std::vector<Scalar>(logits.data().begin(), logits.data().end());
  };
  return greedy_decode(next, options);
}

LanguageModel pretrain_lm(const std::vector<PromptSample>& train, const std::vector<PromptSample>& heldout,
                          const LmConfig& config, const LmTrainConfig& tc, Rng& rng, LmTrainReport* report,
                          const std::function<void(const LanguageModel&, std::size_t)>& on_epoch) {
  if (train.empty()) throw IngestionError("pretrain_lm: empty training corpus");
  if (tc.batch_size == 0) throw ConfigError("pretrain_lm: batch_size must be positive");
  Rng init_rng = rng.fork(1);
  Rng order_rng = rng.fork(2);
  LanguageModel model = init_lm(config, init_rng);
  AdamState adam = AdamState::for_params(model.params, AdamConfig{tc.learning_rate});
  LmTrainReport local;
  LmTrainReport& rep = report ? *report : local;
  rep = LmTrainReport{};
  rep.initial_train_loss = mean_prompt_loss(model, train);
  const auto& eval_set = heldout.empty() ? train : heldout;

  LanguageModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  try {
    for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
      order_rng.shuffle(std::span<std::size_t>(order));
      double epoch_loss = 0.0;
      for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
        const std::size_t stop = std::min(order.size(), start + tc.batch_size);
        std::vector<Tensor> grads;
        for (std::size_t i = start; i < stop; ++i) {
          const auto& s = train[order[i]];
          ad::Tape tape;
          nn::Bound p(tape, model.params);
          auto loss = prompt_loss(p, model.config, embed(p, s.context), s);
          const double value = loss.value().item();
          if (!std::isfinite(value)) throw TrainingError("pretrain_lm: non-finite loss in epoch " + std::to_string(epoch));
          epoch_loss += value;
          tape.backward(loss);
          auto g = ad::gradients(tape, p.vars());
          if (grads.empty()) {
            grads = std::move(g);
          } else {
            for (std::size_t k = 0; k < grads.size(); ++k) {
              for (std::size_t j = 0; j < grads[k].size(); ++j) grads[k][j] += g[k][j];
            }
          }
        }
        const Scalar inv = Scalar(1) / Scalar(stop - start);
        for (auto& g : grads) {
          for (auto& v : g.data()) v *= inv;
        }
        adam_step(adam, model.params, grads);
      }
      rep.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
      const double held = mean_prompt_loss(model, eval_set);
      if (!std::isfinite(held)) throw TrainingError("pretrain_lm: non-finite held-out loss");
      rep.heldout_loss.push_back(held);
      if (on_epoch) on_epoch(model, epoch);
      if (held < best_loss * (1.0 - tc.min_improvement)) {
        best_loss = held;
        best = model;
        rep.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= tc.patience) {
        break;
      }
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("pretrain_lm: diverged: ") + e.what());
  }
  best.params.set_frozen(true);
  return best;
}

}  // namespace ddpt
