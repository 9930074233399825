// SPDX-License-Identifier: Apache-2.0
#include "ddpt/experiment.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "ddpt/checkpoint.hpp"
#include "ddpt/diffusion.hpp"
#include "ddpt/error.hpp"
#include "ddpt/interpret.hpp"
#include "ddpt/trainer.hpp"

namespace ddpt {

namespace fs = std::filesystem;

namespace {

fs::path in_dir(const ExperimentConfig& c, const char* name) { return fs::path(c.out_dir) / name; }

void write_json(const fs::path& path, const nlohmann::json& doc) { write_file(path, doc.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

NoiseSchedule schedule_for(const ExperimentConfig& c) {
  return build_linear_schedule(c.diffusion.steps, c.diffusion.beta_start, c.diffusion.beta_end);
}

std::vector<PromptSample> heldout_samples(const ExperimentConfig& c, const Vocab& vocab) {
  return make_samples(load_corpus(c).heldout, vocab, c.corpus.n_ctx);
}

std::string text_of(const Vocab& vocab, std::span<const TokenId> ids) { return vocab.decode(ids); }

}  // namespace

nlohmann::json lm_config_to_json(const LmConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"d_model", c.d_model},       {"n_heads", c.n_heads},
          {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers}, {"d_ff", c.d_ff},
          {"max_positions", c.max_positions}};
}

LmConfig lm_config_from_json(const nlohmann::json& j) {
  LmConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  return c;
}

nlohmann::json denoiser_config_to_json(const DenoiserConfig& c) {
  return {{"n_ctx", c.n_ctx},       {"d_model", c.d_model}, {"d_low", c.d_low},
          {"n_layers", c.n_layers}, {"n_heads", c.n_heads}, {"d_ff", c.d_ff}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.n_ctx = j.at("n_ctx").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_low = j.at("d_low").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  return c;
}

void save_lm(const fs::path& path, const LmBundle& bundle) {
  save_checkpoint(path, {{"kind", "lm"}, {"lm", lm_config_to_json(bundle.model.config)}, {"vocab", bundle.vocab.to_json()}},
                  bundle.model.params);
}

LmBundle load_lm(const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  try {
    if (ckpt.config.at("kind") != "lm") throw ModelContractError(path.string() + " is not a language model checkpoint");
    LmBundle b{LanguageModel{lm_config_from_json(ckpt.config.at("lm")), std::move(ckpt.params)},
               Vocab::from_json(ckpt.config.at("vocab"))};
    if (b.vocab.size() != b.model.config.vocab_size) throw ModelContractError("LM checkpoint vocabulary size mismatch");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

void save_denoiser(const fs::path& path, const Denoiser& denoiser) {
  save_checkpoint(path, {{"kind", "denoiser"}, {"denoiser", denoiser_config_to_json(denoiser.config)}},
                  denoiser.params);
}

Denoiser load_denoiser(const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  try {
    if (ckpt.config.at("kind") != "denoiser") throw ModelContractError(path.string() + " is not a denoiser checkpoint");
    return Denoiser{denoiser_config_from_json(ckpt.config.at("denoiser")), std::move(ckpt.params)};
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

void save_optimized(const fs::path& path, const std::vector<Tensor>& contexts) {
  ParamSet set;
  for (std::size_t i = 0; i < contexts.size(); ++i) set.add("heldout." + std::to_string(i), contexts[i]);
  save_checkpoint(path, {{"kind", "optimized"}, {"count", contexts.size()}}, set);
}

std::vector<Tensor> load_optimized(const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config.value("kind", "") != "optimized") {
    throw ModelContractError(path.string() + " is not an optimized-context file");
  }
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) out.push_back(ckpt.params["heldout." + std::to_string(i)]);
  return out;
}

Rng stage_rng(std::uint64_t seed, Stage stage) {
  Rng root(seed);
  return root.fork(static_cast<std::uint64_t>(stage));
}

CorpusFiles load_corpus(const ExperimentConfig& c) {
  CorpusFiles f;
  if (c.corpus.train_path.empty()) {
    f.pretrain = read_jsonl(in_dir(c, artifact::kPretrainCorpus));
    f.pretrain_val = read_jsonl(in_dir(c, artifact::kPretrainValCorpus));
    f.train = read_jsonl(in_dir(c, artifact::kTrainCorpus));
    f.heldout = read_jsonl(in_dir(c, artifact::kHeldoutCorpus));
    return f;
  }
  f.train = read_jsonl(c.corpus.train_path);
  f.heldout = read_jsonl(c.corpus.heldout_path);
  if (c.corpus.pretrain_path.empty()) {
    f.pretrain = f.train;
    f.pretrain_val = f.heldout;
  } else {
    f.pretrain = read_jsonl(c.corpus.pretrain_path);
    f.pretrain_val = read_jsonl(c.corpus.pretrain_val_path);
  }
  return f;
}

std::vector<GenerationRecord> read_generations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("index").get<std::size_t>(), j.at("instruction").get<std::string>(),
                     j.at("reference").get<std::string>(), j.at("manual").get<std::string>(),
                     j.at("optimized").get<std::string>(), j.at("manual_loss").get<double>(),
                     j.at("optimized_loss").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void stage_gen_corpus(const ExperimentConfig& c) {
  c.validate();
  const CorpusSplit split = generate_split(
      SplitSizes{c.corpus.pretrain_count, c.corpus.pretrain_val_count, c.corpus.train_count, c.corpus.heldout_count},
      c.seed);
  fs::create_directories(c.out_dir);
  write_jsonl(in_dir(c, artifact::kPretrainCorpus), split.pretrain);
  write_jsonl(in_dir(c, artifact::kPretrainValCorpus), split.pretrain_val);
  write_jsonl(in_dir(c, artifact::kTrainCorpus), split.train);
  write_jsonl(in_dir(c, artifact::kHeldoutCorpus), split.heldout);
}

void stage_pretrain(const ExperimentConfig& c) {
  c.validate();
  const CorpusFiles corpus = load_corpus(c);
  std::vector<RawSample> vocab_source = corpus.pretrain;
  vocab_source.insert(vocab_source.end(), corpus.train.begin(), corpus.train.end());
  Vocab vocab = build_vocab(corpus_texts(vocab_source), c.corpus.vocab_max);
  LmConfig lm_config = c.lm;
  lm_config.vocab_size = vocab.size();
  const auto train = make_samples(corpus.pretrain, vocab, c.corpus.n_ctx);
  const auto heldout = make_samples(corpus.pretrain_val, vocab, c.corpus.n_ctx);
  Rng rng = stage_rng(c.seed, Stage::Pretrain);
  LmTrainReport report;
  LanguageModel lm = pretrain_lm(train, heldout, lm_config, c.pretrain, rng, &report,
                                 [](const LanguageModel&, std::size_t epoch) {
                                   std::cerr << "pretrain: epoch " << epoch + 1 << " done\n";
                                 });
  save_lm(in_dir(c, artifact::kLm), LmBundle{lm, vocab});
  write_json(in_dir(c, artifact::kPretrainReport),
             {{"vocab_size", vocab.size()},
              {"train_loss", report.train_loss},
              {"heldout_loss", report.heldout_loss},
              {"best_epoch", report.best_epoch},
              {"initial_train_loss", report.initial_train_loss}});
}

void stage_train(const ExperimentConfig& c) {
  c.validate();
  const LmBundle lm = load_lm(in_dir(c, artifact::kLm));
  const auto samples = make_samples(load_corpus(c).train, lm.vocab, c.corpus.n_ctx);
  Rng init_rng = stage_rng(c.seed, Stage::DenoiserInit);
  Denoiser denoiser = init_denoiser(c.denoiser_config(), init_rng);
  TrainHooks hooks;
  const fs::path ckpt_path = in_dir(c, artifact::kDenoiser);
  hooks.on_epoch = [&ckpt_path](const Denoiser& d, const TrainReport& r, std::size_t epoch) {
    save_denoiser(ckpt_path, d);
    std::cerr << "train: epoch " << epoch + 1 << " lm_loss " << r.lm_loss.back() << "\n";
  };
  auto [trained, report] = train(samples, std::move(denoiser), lm.model, schedule_for(c), c.train_config(), hooks);
  save_denoiser(in_dir(c, artifact::kDenoiser), trained);
  write_json(in_dir(c, artifact::kTrainReport), {{"lm_loss", report.lm_loss},
                                                 {"x0_loss", report.x0_loss},
                                                 {"epochs_run", report.lm_loss.size()},
                                                 {"lm_digest_before", report.lm_digest_before},
                                                 {"lm_digest_after", report.lm_digest_after}});
}

void stage_optimize(const ExperimentConfig& c) {
  c.validate();
  const LmBundle lm = load_lm(in_dir(c, artifact::kLm));
  const Denoiser denoiser = load_denoiser(in_dir(c, artifact::kDenoiser));
  const auto samples = heldout_samples(c, lm.vocab);
  const NoiseSchedule sched = schedule_for(c);
  Rng rng = stage_rng(c.seed, Stage::Optimize);
  std::vector<Tensor> contexts;
  for (const auto& s : samples) {
    contexts.push_back(optimize_prompt(denoiser, lm.model, s, sched, rng, ChainOptions{c.diffusion.noise_scale},
                                       c.train.direction));
  }
  save_optimized(in_dir(c, artifact::kOptimized), contexts);
}

void stage_generate(const ExperimentConfig& c) {
  c.validate();
  const LmBundle lm = load_lm(in_dir(c, artifact::kLm));
  const auto raw = load_corpus(c).heldout;
  const auto samples = make_samples(raw, lm.vocab, c.corpus.n_ctx);
  const auto optimized = load_optimized(in_dir(c, artifact::kOptimized));
  if (optimized.size() != samples.size()) {
    throw ModelContractError("optimized contexts (" + std::to_string(optimized.size()) + ") do not match held-out samples (" +
                             std::to_string(samples.size()) + ")");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor manual = embed(lm.model.embedding_table(), samples[i].context);
    const auto manual_ids = generate(lm.model, manual, samples[i], c.decode);
    const auto optimized_ids = generate(lm.model, optimized[i], samples[i], c.decode);
    const nlohmann::json row{{"index", i},
                             {"instruction", raw[i].instruction},
                             {"reference", detokenize(tokenize(raw[i].output))},
                             {"manual", text_of(lm.vocab, manual_ids)},
                             {"optimized", text_of(lm.vocab, optimized_ids)},
                             {"manual_loss", prompt_loss(lm.model, manual, samples[i])},
                             {"optimized_loss", prompt_loss(lm.model, optimized[i], samples[i])}};
    out << row.dump() << '\n';
  }
  write_file(in_dir(c, artifact::kGenerations), out.str());
}

void stage_evaluate(const ExperimentConfig& c) {
  c.validate();
  const auto rows = read_generations(in_dir(c, artifact::kGenerations));
  std::vector<std::string> refs;
  std::vector<std::string> manual;
  std::vector<std::string> optimized;
  for (const auto& r : rows) {
    refs.push_back(r.reference);
    manual.push_back(r.manual);
    optimized.push_back(r.optimized);
  }
  const MetricReport m = evaluate_texts(manual, refs, c.metrics);
  const MetricReport o = evaluate_texts(optimized, refs, c.metrics);
  write_json(in_dir(c, artifact::kMetricsManual), m.to_json());
  write_file(fs::path(c.out_dir) / "metrics_manual.csv", m.to_csv());
  write_json(in_dir(c, artifact::kMetricsOptimized), o.to_json());
  write_file(fs::path(c.out_dir) / "metrics_optimized.csv", o.to_csv());
}

void stage_interpret(const ExperimentConfig& c, std::size_t sample_index) {
  c.validate();
  const LmBundle lm = load_lm(in_dir(c, artifact::kLm));
  const auto optimized = load_optimized(in_dir(c, artifact::kOptimized));
  if (sample_index >= optimized.size()) {
    throw ConfigError("interpret: sample index " + std::to_string(sample_index) + " out of range (" +
                      std::to_string(optimized.size()) + " optimized contexts)");
  }
  const NeighborReport report =
      interpret_context(optimized[sample_index], lm.vocab, lm.model.embedding_table(), c.interpret_k);
  nlohmann::json doc = report.to_json();
  doc["sample_index"] = sample_index;
  write_json(in_dir(c, artifact::kNeighbors), doc);
  write_file(fs::path(c.out_dir) / "neighbors.csv", report.to_csv());
}

nlohmann::json stage_report(const ExperimentConfig& c) {
  c.validate();
  const auto rows = read_generations(in_dir(c, artifact::kGenerations));
  const MetricReport m = MetricReport::from_json(read_json(in_dir(c, artifact::kMetricsManual)));
  const MetricReport o = MetricReport::from_json(read_json(in_dir(c, artifact::kMetricsOptimized)));
  double manual_loss = 0.0;
  double optimized_loss = 0.0;
  for (const auto& r : rows) {
    manual_loss += r.manual_loss;
    optimized_loss += r.optimized_loss;
  }
  if (!rows.empty()) {
    manual_loss /= static_cast<double>(rows.size());
    optimized_loss /= static_cast<double>(rows.size());
  }
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& name : m.metrics) {
    const double a = m.get(name);
    const double b = o.get(name);
    metrics[name] = {{"manual", a}, {"optimized", b}, {"delta", b - a}};
  }
  const nlohmann::json train_report = read_json(in_dir(c, artifact::kTrainReport));
  const nlohmann::json pretrain_report = read_json(in_dir(c, artifact::kPretrainReport));
  nlohmann::json report{
      {"seed", c.seed},
      {"config", c.to_json()},
      {"heldout_count", rows.size()},
      {"lm_loss", {{"manual", manual_loss}, {"optimized", optimized_loss}, {"delta", optimized_loss - manual_loss}}},
      {"metrics", metrics},
      {"pretrain", {{"best_epoch", pretrain_report.at("best_epoch")}, {"heldout_loss", pretrain_report.at("heldout_loss")}}},
      {"train",
       {{"epochs_run", train_report.at("epochs_run")},
        {"lm_loss", train_report.at("lm_loss")},
        {"lm_digest_before", train_report.at("lm_digest_before")},
        {"lm_digest_after", train_report.at("lm_digest_after")}}},
      {"neighbors", read_json(in_dir(c, artifact::kNeighbors))}};
  write_json(in_dir(c, artifact::kReport), report);
  write_file(fs::path(c.out_dir) / "report.csv", report_csv(report));
  return report;
}

std::string report_csv(const nlohmann::json& report) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,manual,optimized,delta\n";
  const auto row = [&out](const std::string& name, const nlohmann::json& v) {
    out << name << ',' << v.at("manual").get<double>() << ',' << v.at("optimized").get<double>() << ','
        << v.at("delta").get<double>() << '\n';
  };
  row("lm_loss", report.at("lm_loss"));
  for (const auto& [name, v] : report.at("metrics").items()) row(name, v);
  return out.str();
}

nlohmann::json run_experiment(const ExperimentConfig& c) {
  c.validate();
  fs::create_directories(c.out_dir);
  write_file(in_dir(c, artifact::kConfig), c.to_text());
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json report;
  const std::vector<std::pair<std::string, std::function<void()>>> stages{
      {"gen-corpus", [&] { if (c.corpus.train_path.empty()) stage_gen_corpus(c); }},
      {"pretrain-lm", [&] { stage_pretrain(c); }},
      {"train", [&] { stage_train(c); }},
      {"optimize", [&] { stage_optimize(c); }},
      {"generate", [&] { stage_generate(c); }},
      {"evaluate", [&] { stage_evaluate(c); }},
      {"interpret", [&] { stage_interpret(c); }},
      {"report", [&] { report = stage_report(c); }},
  };
  for (const auto& [name, run] : stages) {
    const auto started = std::chrono::steady_clock::now();
    try {
      run();
    } catch (const Error& e) {
      throw Error("stage " + name + " failed: " + e.what());
    }
    timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  write_json(in_dir(c, artifact::kTimings), timings);
  return report;
}

}  // namespace ddpt
