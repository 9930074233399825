// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpt/config.hpp"
#include "ddpt/corpus.hpp"
#include "ddpt/denoiser.hpp"
#include "ddpt/lm.hpp"
#include "ddpt/metrics.hpp"
#include "ddpt/text.hpp"

namespace ddpt {

// Artifact names inside ExperimentConfig::out_dir. Each stage reads only what
// earlier stages wrote there.
namespace artifact {
inline constexpr const char* kConfig = "config.txt";
inline constexpr const char* kPretrainCorpus = "pretrain.jsonl";
inline constexpr const char* kPretrainValCorpus = "pretrain_val.jsonl";
inline constexpr const char* kTrainCorpus = "train.jsonl";
inline constexpr const char* kHeldoutCorpus = "heldout.jsonl";
inline constexpr const char* kLm = "lm.ckpt";
inline constexpr const char* kPretrainReport = "pretrain_report.json";
inline constexpr const char* kDenoiser = "denoiser.ckpt";
inline constexpr const char* kTrainReport = "train_report.json";
inline constexpr const char* kOptimized = "optimized.ckpt";
inline constexpr const char* kGenerations = "generations.jsonl";
inline constexpr const char* kMetricsManual = "metrics_manual.json";
inline constexpr const char* kMetricsOptimized = "metrics_optimized.json";
inline constexpr const char* kNeighbors = "neighbors.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kTimings = "timings.json";
}  // namespace artifact

nlohmann::json lm_config_to_json(const LmConfig& c);
LmConfig lm_config_from_json(const nlohmann::json& j);
nlohmann::json denoiser_config_to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

// A frozen LM plus the vocabulary it was trained with, as stored in lm.ckpt.
struct LmBundle {
  LanguageModel model;
  Vocab vocab;
};
void save_lm(const std::filesystem::path& path, const LmBundle& bundle);
LmBundle load_lm(const std::filesystem::path& path);
void save_denoiser(const std::filesystem::path& path, const Denoiser& denoiser);
Denoiser load_denoiser(const std::filesystem::path& path);

// Optimized context embeddings, one per held-out sample in corpus order.
void save_optimized(const std::filesystem::path& path, const std::vector<Tensor>& contexts);
std::vector<Tensor> load_optimized(const std::filesystem::path& path);

// Seed streams per stage, all derived from ExperimentConfig::seed.
enum class Stage : std::uint64_t { Pretrain = 10, DenoiserInit = 20, Optimize = 30 };
Rng stage_rng(std::uint64_t seed, Stage stage);

struct CorpusFiles {
  std::vector<RawSample> pretrain;
  std::vector<RawSample> pretrain_val;
  std::vector<RawSample> train;
  std::vector<RawSample> heldout;
};
CorpusFiles load_corpus(const ExperimentConfig& config);

// One held-out sample decoded under both contexts.
struct GenerationRecord {
  std::size_t index = 0;
  std::string instruction;
  std::string reference;
  std::string manual;
  std::string optimized;
  double manual_loss = 0.0;
  double optimized_loss = 0.0;
};
std::vector<GenerationRecord> read_generations(const std::filesystem::path& path);

// Stages, in pipeline order. Each validates the config, reads its inputs
// from out_dir and writes its artifacts there.
void stage_gen_corpus(const ExperimentConfig& config);
void stage_pretrain(const ExperimentConfig& config);
void stage_train(const ExperimentConfig& config);
void stage_optimize(const ExperimentConfig& config);
void stage_generate(const ExperimentConfig& config);
void stage_evaluate(const ExperimentConfig& config);
void stage_interpret(const ExperimentConfig& config, std::size_t sample_index = 0);
nlohmann::json stage_report(const ExperimentConfig& config);

// All stages in order; a stage failure is rethrown as an Error naming the
// stage. Wall-clock times go to timings.json only, never into the report.
nlohmann::json run_experiment(const ExperimentConfig& config);

std::string report_csv(const nlohmann::json& report);

}  // namespace ddpt
