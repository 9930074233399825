// SPDX-License-Identifier: Apache-2.0
#include "ddpt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <type_traits>

#include "ddpt/error.hpp"
#include "ddpt/metrics.hpp"

namespace ddpt {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(const std::string& key, std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (!v.empty() && (v.front() == '"' || v.back() == '"')) throw ConfigError(key + ": unterminated string " + v);
  return v;
}

template <class T>
T parse_value(const std::string& key, const std::string& raw) {
  const std::string v = unquote(key, raw);
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  } else if constexpr (std::is_integral_v<T>) {
    T out{};
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
  } else if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return static_cast<T>(out);
  } else if constexpr (std::is_same_v<T, Objective>) {
    if (v == "lm") return Objective::LmOnly;
    if (v == "lm+x0") return Objective::LmPlusX0;
    throw ConfigError(key + ": expected lm or lm+x0, got '" + v + "'");
  } else if constexpr (std::is_same_v<T, DirectionMode>) {
    if (v == "additive") return DirectionMode::Additive;
    if (v == "absolute") return DirectionMode::Absolute;
    throw ConfigError(key + ": expected additive or absolute, got '" + v + "'");
  } else {
    static_assert(std::is_same_v<T, std::vector<std::string>>);
    std::vector<std::string> out;
    std::stringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
}

template <class T>
nlohmann::json to_json_value(const T& v) {
  if constexpr (std::is_same_v<T, Objective>) {
    return v == Objective::LmOnly ? "lm" : "lm+x0";
  } else if constexpr (std::is_same_v<T, DirectionMode>) {
    return v == DirectionMode::Additive ? "additive" : "absolute";
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    std::string joined;
    for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
    return joined;
  } else {
    return v;
  }
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<nlohmann::json(const ExperimentConfig&)> get;
};

template <class Access>
Field field(std::string key, Access access) {
  using T = std::decay_t<decltype(access(std::declval<ExperimentConfig&>()))>;
  return Field{key,
               [key, access](ExperimentConfig& c, const std::string& raw) { access(c) = parse_value<T>(key, raw); },
               [access](const ExperimentConfig& c) {
                 return to_json_value(access(const_cast<ExperimentConfig&>(c)));
               }};
}

#define DDPT_FIELD(key, member) field(key, [](ExperimentConfig& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      DDPT_FIELD("out_dir", out_dir),
      DDPT_FIELD("seed", seed),
      DDPT_FIELD("corpus.train_path", corpus.train_path),
      DDPT_FIELD("corpus.heldout_path", corpus.heldout_path),
      DDPT_FIELD("corpus.pretrain_path", corpus.pretrain_path),
      DDPT_FIELD("corpus.pretrain_val_path", corpus.pretrain_val_path),
      DDPT_FIELD("corpus.pretrain_count", corpus.pretrain_count),
      DDPT_FIELD("corpus.pretrain_val_count", corpus.pretrain_val_count),
      DDPT_FIELD("corpus.train_count", corpus.train_count),
      DDPT_FIELD("corpus.heldout_count", corpus.heldout_count),
      DDPT_FIELD("corpus.vocab_max", corpus.vocab_max),
      DDPT_FIELD("corpus.n_ctx", corpus.n_ctx),
      DDPT_FIELD("lm.d_model", lm.d_model),
      DDPT_FIELD("lm.n_heads", lm.n_heads),
      DDPT_FIELD("lm.encoder_layers", lm.encoder_layers),
      DDPT_FIELD("lm.decoder_layers", lm.decoder_layers),
      DDPT_FIELD("lm.d_ff", lm.d_ff),
      DDPT_FIELD("lm.max_positions", lm.max_positions),
      DDPT_FIELD("pretrain.max_epochs", pretrain.max_epochs),
      DDPT_FIELD("pretrain.batch_size", pretrain.batch_size),
      DDPT_FIELD("pretrain.learning_rate", pretrain.learning_rate),
      DDPT_FIELD("pretrain.patience", pretrain.patience),
      DDPT_FIELD("pretrain.min_improvement", pretrain.min_improvement),
      DDPT_FIELD("denoiser.d_low", denoiser.d_low),
      DDPT_FIELD("denoiser.n_layers", denoiser.n_layers),
      DDPT_FIELD("denoiser.n_heads", denoiser.n_heads),
      DDPT_FIELD("denoiser.d_ff", denoiser.d_ff),
      DDPT_FIELD("diffusion.steps", diffusion.steps),
      DDPT_FIELD("diffusion.beta_start", diffusion.beta_start),
      DDPT_FIELD("diffusion.beta_end", diffusion.beta_end),
      DDPT_FIELD("diffusion.noise_scale", diffusion.noise_scale),
      DDPT_FIELD("train.k", train.k),
      DDPT_FIELD("train.epochs", train.epochs),
      DDPT_FIELD("train.learning_rate", train.learning_rate),
      DDPT_FIELD("train.objective", train.objective),
      DDPT_FIELD("train.x0_loss_weight", train.x0_loss_weight),
      DDPT_FIELD("train.batch_size", train.batch_size),
      DDPT_FIELD("train.detach_chain", train.detach_chain),
      DDPT_FIELD("train.direction", train.direction),
      DDPT_FIELD("train.convergence_tolerance", train.convergence_tolerance),
      DDPT_FIELD("train.convergence_window", train.convergence_window),
      DDPT_FIELD("decode.max_len", decode.max_len),
      DDPT_FIELD("decode.repetition_penalty", decode.repetition_penalty),
      DDPT_FIELD("decode.no_repeat_ngram", decode.no_repeat_ngram),
      DDPT_FIELD("metrics.enabled", metrics),
      DDPT_FIELD("interpret.k", interpret_k),
  };
  return all;
}

#undef DDPT_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

DenoiserConfig ExperimentConfig::denoiser_config() const {
  DenoiserConfig c = denoiser;
  c.n_ctx = corpus.n_ctx;
  c.d_model = lm.d_model;
  return c;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig c = train;
  c.seed = seed;
  return c;
}

void ExperimentConfig::validate() const {
  require(!out_dir.empty(), "out_dir must not be empty");
  require(corpus.train_path.empty() == corpus.heldout_path.empty(),
          "corpus.train_path and corpus.heldout_path must be given together");
  require(corpus.pretrain_path.empty() == corpus.pretrain_val_path.empty(),
          "corpus.pretrain_path and corpus.pretrain_val_path must be given together");
  require(corpus.pretrain_path.empty() || !corpus.train_path.empty(),
          "corpus.pretrain_path requires corpus.train_path");
  require(corpus.train_count > 0 && corpus.heldout_count > 0 && corpus.pretrain_count > 0 &&
              corpus.pretrain_val_count > 0,
          "corpus counts must be positive");
  require(corpus.vocab_max > static_cast<std::size_t>(Vocab::kReservedCount), "corpus.vocab_max too small");
  require(corpus.n_ctx > 0, "corpus.n_ctx must be positive");
  LmConfig lm_check = lm;
  lm_check.vocab_size = corpus.vocab_max;
  lm_check.validate();
  require(lm.d_model % 2 == 0, "lm.d_model must be even");
  require(lm.max_positions > corpus.n_ctx, "lm.max_positions must exceed corpus.n_ctx");
  require(pretrain.max_epochs > 0 && pretrain.batch_size > 0, "pretrain epochs and batch size must be positive");
  require(pretrain.learning_rate > 0.0, "pretrain.learning_rate must be positive");
  require(pretrain.min_improvement >= 0.0, "pretrain.min_improvement must be non-negative");
  denoiser_config().validate();
  require(diffusion.steps > 0, "diffusion.steps must be positive");
  require(diffusion.beta_start > 0.0 && diffusion.beta_start <= diffusion.beta_end && diffusion.beta_end < 1.0,
          "diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  require(diffusion.noise_scale >= 0.0, "diffusion.noise_scale must be non-negative");
  train_config().validate();
  require(decode.max_len > 0, "decode.max_len must be positive");
  require(decode.repetition_penalty > 0.0, "decode.repetition_penalty must be positive");
  for (const auto& m : metrics) {
    require(std::find(metric_names().begin(), metric_names().end(), m) != metric_names().end(),
            "metrics.enabled: unknown metric '" + m + "'");
  }
  require(interpret_k > 0, "interpret.k must be positive");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    const nlohmann::json v = f.get(*this);
    out << name << " = ";
    if (v.is_string()) out << '"' << v.get<std::string>() << '"';
    else out << v.dump();
    out << '\n';
  }
  return out.str();
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, value);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos && line.find('"') > hash) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(n) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    const std::string name = trim(line.substr(0, eq));
    const std::string key = section.empty() ? name : section + "." + name;
    try {
      set_config_value(config, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig config;
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) {
      set_config_value(config, key, value.get<std::string>());
    } else {
      set_config_value(config, key, value.dump());
    }
  }
  return config;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace ddpt
