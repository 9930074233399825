// SPDX-License-Identifier: Apache-2.0
#include "ddpt/corpus.hpp"

#include <array>
#include <fstream>
#include <set>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ddpt/error.hpp"

namespace ddpt {

const std::string& default_context() {
  static const std::string context =
      "Below is an instruction that describes a task. Write a response that appropriately completes the request.";
  return context;
}

const std::string& explicit_style_context() {
  static const std::string context = "Write explicit code in the written operand order";
  return context;
}

const std::string& compact_style_context() {
  static const std::string context = "Write compact code with builtins and swapped operands";
  return context;
}

std::vector<TokenId> fit_context(std::vector<TokenId> ids, std::size_t n_ctx) {
  ids.resize(n_ctx, Vocab::kPad);
  return ids;
}

PromptSample make_sample(const RawSample& raw, const Vocab& vocab, std::size_t n_ctx) {
  PromptSample s;
  s.context = fit_context(vocab.encode(raw.context.value_or(default_context())), n_ctx);
  s.instruction = vocab.encode(raw.instruction);
  s.target = vocab.encode(raw.output);
  s.target.push_back(Vocab::kEnd);
  if (s.instruction.empty()) throw IngestionError("sample has an empty instruction");
  return s;
}

std::vector<PromptSample> make_samples(const std::vector<RawSample>& raw, const Vocab& vocab, std::size_t n_ctx) {
  std::vector<PromptSample> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(make_sample(r, vocab, n_ctx));
  return out;
}

std::vector<std::string> corpus_texts(const std::vector<RawSample>& raw) {
  std::vector<std::string> texts;
  texts.push_back(default_context());
  for (const auto& r : raw) {
    if (r.context) texts.push_back(*r.context);
    texts.push_back(r.instruction);
    texts.push_back(r.output);
  }
  return texts;
}

RawSample parse_sample_line(const std::string& line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(where + ": invalid JSON (" + e.what() + ")");
  }
  if (!doc.is_object()) throw IngestionError(where + ": expected a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "context" && key != "instruction" && key != "output" && key != "input") {
      throw IngestionError(where + ": unexpected field '" + key + "'");
    }
    if (!value.is_string()) throw IngestionError(where + ": field '" + key + "' must be a string");
  }
  if (!doc.contains("instruction") || !doc.contains("output")) {
    throw IngestionError(where + ": 'instruction' and 'output' are required");
  }
  RawSample s;
  if (doc.contains("context")) s.context = doc["context"].get<std::string>();
  s.instruction = doc["instruction"].get<std::string>();
  // CodeAlpaca rows may carry an extra input; it is appended to the instruction.
  if (doc.contains("input") && !doc["input"].get<std::string>().empty()) {
    s.instruction += " " + doc["input"].get<std::string>();
  }
  s.output = doc["output"].get<std::string>();
  return s;
}

std::vector<RawSample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset " + path.string());
  std::vector<RawSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_sample_line(line, n));
  }
  if (out.empty()) throw IngestionError("dataset " + path.string() + " is empty");
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<RawSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write dataset " + path.string());
  for (const auto& s : samples) {
    nlohmann::json doc;
    if (s.context) doc["context"] = *s.context;
    doc["instruction"] = s.instruction;
    doc["output"] = s.output;
    out << doc.dump() << '\n';
  }
}

namespace {

struct Template {
  std::string_view instruction;
  std::string_view output;
  // The same program written in the compact style.
  std::string_view compact;
};

// Placeholders: {a} {b} {v} distinct variables, {n} small number, {f} builtin.
constexpr std::array<Template, 16> kTemplates{{
    {"set {v} to {n}", "{v} = {n}", "{v} = {n}"},
    {"add {a} and {b} and store the result in {v}", "{v} = {a} + {b}", "{v} = {b} + {a}"},
    {"multiply {a} by {b} and save it as {v}", "{v} = {a} * {b}", "{v} = {b} * {a}"},
    {"subtract {b} from {a} into {v}", "{v} = {a} - {b}", "{v} = {a} - {b}"},
    {"return the sum of {a} and {b}", "return {a} + {b}", "return {b} + {a}"},
    {"return the product of {a} and {n}", "return {a} * {n}", "return {n} * {a}"},
    {"return the larger of {a} and {b}", "if {a} > {b}: return {a}\nelse: return {b}", "return max({a}, {b})"},
    {"return the smaller of {a} and {b}", "if {a} < {b}: return {a}\nelse: return {b}", "return min({a}, {b})"},
    {"print {a}", "print({a})", "print({a})"},
    {"if {a} is less than {b} set {v} to {n}", "if {a} < {b}: {v} = {n}", "if {b} > {a}: {v} = {n}"},
    {"increase {v} by {n}", "{v} = {v} + {n}", "{v} = {n} + {v}"},
    {"call {f} on {a} and store it in {v}", "{v} = {f}({a})", "{v} = {f}({a})"},
    {"return {f} of {a}", "return {f}({a})", "return {f}({a})"},
    {"store the square of {a} in {v}", "{v} = {a} * {a}", "{v} = pow({a}, 2)"},
    {"return whether {a} equals {b}", "return {a} == {b}", "return {b} == {a}"},
    {"print {a} plus {n}", "print({a} + {n})", "print({n} + {a})"},
}};

constexpr std::array<std::string_view, 18> kVariables{"a", "b", "c", "d", "x", "y", "z", "n", "m",
                                                      "i", "total", "count", "result", "value", "score",
                                                      "price", "size", "speed"};
constexpr std::array<std::string_view, 6> kBuiltins{"abs", "len", "sqrt", "round", "str", "int"};

std::string fill(std::string_view pattern, const std::string& a, const std::string& b, const std::string& v,
                 const std::string& n, const std::string& f) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{' && i + 2 < pattern.size() && pattern[i + 2] == '}') {
      switch (pattern[i + 1]) {
        case 'a': out += a; break;
        case 'b': out += b; break;
        case 'v': out += v; break;
        case 'n': out += n; break;
        case 'f': out += f; break;
        default: throw ContractError("unknown template placeholder");
      }
      i += 2;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

struct Drawn {
  std::string instruction;
  std::string explicit_output;
  std::string compact_output;
};

Drawn draw(Rng& rng) {
  const auto& tpl = kTemplates[rng.uniform_int(0, kTemplates.size() - 1)];
  std::array<std::size_t, 3> picks{};
  for (std::size_t i = 0; i < picks.size(); ++i) {
    bool clash;
    do {
      picks[i] = rng.uniform_int(0, kVariables.size() - 1);
      clash = false;
      for (std::size_t j = 0; j < i; ++j) clash = clash || picks[j] == picks[i];
    } while (clash);
  }
  const std::string a(kVariables[picks[0]]);
  const std::string b(kVariables[picks[1]]);
  const std::string v(kVariables[picks[2]]);
  const std::string n = std::to_string(rng.uniform_int(0, 12));
  const std::string f(kBuiltins[rng.uniform_int(0, kBuiltins.size() - 1)]);
  return Drawn{fill(tpl.instruction, a, b, v, n, f), fill(tpl.output, a, b, v, n, f), fill(tpl.compact, a, b, v, n, f)};
}

// Pretraining mixture: a third explicit-context/explicit-style, a third
// compact-context/compact-style, and a third under the default context with
// either style at even odds.
RawSample mixture_sample(const Drawn& d, Rng& rng) {
  switch (rng.uniform_int(0, 2)) {
    case 0: return RawSample{explicit_style_context(), d.instruction, d.explicit_output};
    case 1: return RawSample{compact_style_context(), d.instruction, d.compact_output};
    default:
      return RawSample{std::nullopt, d.instruction, rng.uniform_int(0, 1) == 0 ? d.explicit_output : d.compact_output};
  }
}

}  // namespace

std::vector<RawSample> generate_corpus(std::size_t count, Rng& rng) {
  std::vector<RawSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Drawn d = draw(rng);
    out.push_back(RawSample{std::nullopt, d.instruction, d.explicit_output});
  }
  return out;
}

CorpusSplit generate_split(const SplitSizes& sizes, std::uint64_t seed) {
  Rng rng(seed);
  CorpusSplit split;
  std::set<std::string> seen;
  auto fill_part = [&](std::vector<RawSample>& part, std::size_t wanted, bool mixture) {
    std::size_t attempts = 0;
    while (part.size() < wanted) {
      if (++attempts > 1000 * (wanted + 1)) throw ContractError("corpus generator cannot produce enough unique samples");
      const Drawn d = draw(rng);
      if (!seen.insert(d.instruction).second) continue;
      part.push_back(mixture ? mixture_sample(d, rng) : RawSample{std::nullopt, d.instruction, d.explicit_output});
    }
  };
  fill_part(split.pretrain, sizes.pretrain, true);
  fill_part(split.pretrain_val, sizes.pretrain_val, true);
  fill_part(split.train, sizes.train, false);
  fill_part(split.heldout, sizes.heldout, false);
  return split;
}

}  // namespace ddpt
