// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpt/denoiser.hpp"
#include "ddpt/lm.hpp"
#include "ddpt/trainer.hpp"

namespace ddpt {

struct CorpusConfig {
  // Empty paths mean the synthetic corpus is generated from the seed. Without
  // pretraining paths the LM is pretrained on train_path and validated on
  // heldout_path.
  std::string train_path;
  std::string heldout_path;
  std::string pretrain_path;
  std::string pretrain_val_path;
  std::size_t pretrain_count = 600;
  std::size_t pretrain_val_count = 60;
  std::size_t train_count = 200;
  std::size_t heldout_count = 50;
  std::size_t vocab_max = 256;
  std::size_t n_ctx = 8;
};

struct DiffusionConfig {
  std::size_t steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double noise_scale = 1.0;
};

// Every tunable of every stage. Serialized as a flat `section.key = value`
// text file; unknown keys are rejected.
struct ExperimentConfig {
  std::string out_dir = "ddpt_run";
  std::uint64_t seed = 0;
  CorpusConfig corpus;
  LmConfig lm;
  LmTrainConfig pretrain;
  DenoiserConfig denoiser;
  DiffusionConfig diffusion;
  TrainConfig train;
  DecodeOptions decode;
  std::vector<std::string> metrics;  // empty selects every metric
  std::size_t interpret_k = 5;

  // The denoiser's n_ctx and d_model follow corpus.n_ctx and lm.d_model.
  DenoiserConfig denoiser_config() const;
  TrainConfig train_config() const;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Applies one `key = value` assignment; ConfigError for unknown keys or
// values that do not parse as the field's type.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
// Parses `section.key=value` as given on the command line.
void apply_override(ExperimentConfig& config, const std::string& assignment);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Every settable key in file order.
std::vector<std::string> config_keys();

}  // namespace ddpt
