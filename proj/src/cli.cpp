// SPDX-License-Identifier: Apache-2.0
#include "ddpt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "ddpt/config.hpp"
#include "ddpt/error.hpp"
#include "ddpt/experiment.hpp"
#include "ddpt/metrics.hpp"

namespace ddpt {

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_path, "Experiment config file (section.key = value)");
  sub->add_option("--set", flags.overrides, "Override a config key, e.g. --set train.k=3")->take_all();
  sub->add_option("--seed", flags.seed, "Seed for every stochastic choice of the stage");
  sub->add_option("--out", flags.out_dir, "Artifact directory (overrides out_dir)");
}

ExperimentConfig resolve(const CommonFlags& flags, const std::string& stage, bool needs_seed) {
  if (needs_seed && !flags.seed) throw UsageError(stage + ": --seed is required");
  ExperimentConfig config = flags.config_path.empty() ? ExperimentConfig{} : load_config(flags.config_path);
  for (const auto& o : flags.overrides) apply_override(config, o);
  if (flags.seed) config.seed = *flags.seed;
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  config.validate();
  return config;
}

// Lines are {"candidate": ...} / {"reference": ...} objects or bare JSON strings.
std::vector<std::string> read_texts(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(j.is_string() ? j.get<std::string>() : j.at(field).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-driven prompt tuning lab", "ddpt"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic instruction-to-code corpus");
  auto* pretrain = app.add_subcommand("pretrain-lm", "Pretrain and freeze the toy language model");
  auto* train = app.add_subcommand("train", "Train the denoiser against the frozen LM");
  auto* optimize = app.add_subcommand("optimize", "Sample optimized contexts for the held-out samples");
  auto* generate = app.add_subcommand("generate", "Decode held-out samples with manual and optimized contexts");
  auto* evaluate = app.add_subcommand("evaluate", "Score generations, or --pred/--ref files, with the metric suite");
  auto* interpret = app.add_subcommand("interpret", "Nearest vocabulary words of an optimized context");
  auto* report = app.add_subcommand("report", "Combine stage artifacts into the paired report");
  auto* run = app.add_subcommand("run", "Run every stage in order");
  for (auto* sub : {gen, pretrain, train, optimize, generate, evaluate, interpret, report, run}) add_common(sub, flags);

  std::string pred_path;
  std::string ref_path;
  std::string pairs_path;
  std::vector<std::string> metric_list;
  evaluate->add_option("--pred", pred_path, "JSONL of candidates");
  evaluate->add_option("--ref", ref_path, "JSONL of references");
  evaluate->add_option("--pairs", pairs_path, "JSONL of {candidate, reference} pairs");
  evaluate->add_option("--metrics", metric_list, "Subset of metrics to compute")->delimiter(',');
  std::string format = "json";
  evaluate->add_option("--format", format, "Output format for --pred/--ref/--pairs")->check(CLI::IsMember({"json", "csv"}));
  std::size_t index = 0;
  interpret->add_option("--index", index, "Held-out sample whose optimized context is interpreted");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n" << failing->help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      stage_gen_corpus(resolve(flags, "gen-corpus", true));
    } else if (pretrain->parsed()) {
      stage_pretrain(resolve(flags, "pretrain-lm", true));
    } else if (train->parsed()) {
      stage_train(resolve(flags, "train", true));
    } else if (optimize->parsed()) {
      stage_optimize(resolve(flags, "optimize", true));
    } else if (generate->parsed()) {
      stage_generate(resolve(flags, "generate", false));
    } else if (evaluate->parsed()) {
      const bool direct = !pred_path.empty() || !ref_path.empty() || !pairs_path.empty();
      if (direct) {
        std::vector<std::string> cands;
        std::vector<std::string> refs;
        if (!pairs_path.empty()) {
          if (!pred_path.empty() || !ref_path.empty()) throw UsageError("evaluate: --pairs excludes --pred/--ref");
          for (auto& p : read_eval_jsonl(pairs_path)) {
            cands.push_back(std::move(p.candidate));
            refs.push_back(std::move(p.reference));
          }
        } else {
          if (pred_path.empty() || ref_path.empty()) throw UsageError("evaluate: --pred and --ref go together");
          cands = read_texts(pred_path, "candidate");
          refs = read_texts(ref_path, "reference");
        }
        for (const auto& m : metric_list) {
          if (std::find(metric_names().begin(), metric_names().end(), m) == metric_names().end()) {
            throw ConfigError("unknown metric '" + m + "'");
          }
        }
        const MetricReport r = evaluate_texts(cands, refs, metric_list);
        out << (format == "csv" ? r.to_csv() : r.to_json().dump(2) + "\n");
      } else {
        stage_evaluate(resolve(flags, "evaluate", false));
      }
    } else if (interpret->parsed()) {
      stage_interpret(resolve(flags, "interpret", false), index);
    } else if (report->parsed()) {
      out << stage_report(resolve(flags, "report", false)).dump(2) << "\n";
    } else if (run->parsed()) {
      out << run_experiment(resolve(flags, "run", true)).dump(2) << "\n";
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace ddpt
