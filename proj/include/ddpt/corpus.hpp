// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddpt/rng.hpp"
#include "ddpt/text.hpp"

namespace ddpt {

// One line of a JSONL dataset: {"context"?, "instruction", "output"}.
struct RawSample {
  std::optional<std::string> context;
  std::string instruction;
  std::string output;
};

// Tokenized sample: context is exactly n_ctx ids, target ends with Vocab::kEnd.
struct PromptSample {
  std::vector<TokenId> context;
  std::vector<TokenId> instruction;
  std::vector<TokenId> target;
};

// The context sentence of the instruction-following template used when a
// sample carries none.
const std::string& default_context();
// Contexts that pin one of the two code styles the generator writes.
const std::string& explicit_style_context();
const std::string& compact_style_context();

// Right-pads with kPad or truncates on the right to `n_ctx` ids.
std::vector<TokenId> fit_context(std::vector<TokenId> ids, std::size_t n_ctx);
PromptSample make_sample(const RawSample& raw, const Vocab& vocab, std::size_t n_ctx);
std::vector<PromptSample> make_samples(const std::vector<RawSample>& raw, const Vocab& vocab, std::size_t n_ctx);
// Every string a vocabulary should cover: contexts, instructions, outputs.
std::vector<std::string> corpus_texts(const std::vector<RawSample>& raw);

std::vector<RawSample> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<RawSample>& samples);
RawSample parse_sample_line(const std::string& line, std::size_t line_number);

// Templated natural-language instructions paired with mini-language programs
// in the explicit style, under the default context. Deterministic in the
// generator state.
std::vector<RawSample> generate_corpus(std::size_t count, Rng& rng);

struct SplitSizes {
  std::size_t pretrain = 600;
  std::size_t pretrain_val = 60;
  std::size_t train = 200;
  std::size_t heldout = 50;
};

// `pretrain` and `pretrain_val` are the LM's corpus: every program appears in
// one of two styles, explicit or compact. A style-specific context pins the
// style; under the default context either style is equally likely. `train`
// and `heldout` are the prompt-tuning task: explicit style under the default
// context. No instruction occurs in more than one split.
struct CorpusSplit {
  std::vector<RawSample> pretrain;
  std::vector<RawSample> pretrain_val;
  std::vector<RawSample> train;
  std::vector<RawSample> heldout;
};

CorpusSplit generate_split(const SplitSizes& sizes, std::uint64_t seed);

}  // namespace ddpt
