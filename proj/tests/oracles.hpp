// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ddpt/autograd.hpp"
#include "ddpt/denoiser.hpp"
#include "ddpt/diffusion.hpp"
#include "ddpt/error.hpp"
#include "ddpt/lm.hpp"
#include "ddpt/mini_lang.hpp"
#include "ddpt/rng.hpp"
#include "ddpt/text.hpp"
#include "ddpt/trainer.hpp"

namespace oracle {

using ddpt::Rng;
using ddpt::Scalar;
using ddpt::Shape;
using ddpt::Tensor;

// ---------------------------------------------------------------- numerics

inline Tensor random_tensor(const Shape& shape, Rng& rng, double stddev = 1.0) {
  return rng.normal_tensor(shape, stddev);
}

inline Tensor triple_loop_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = static_cast<Scalar>(acc);
    }
  }
  return c;
}

// Relative error with a floor on the denominator, so coordinates whose true
// gradient is numerically zero are judged by absolute error.
constexpr double kGradFloor = 1e-6;

inline double relative_error(double analytic, double numeric, double floor = kGradFloor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;

  void add(double analytic, double numeric, const std::string& where) {
    const double e = relative_error(analytic, numeric);
    ++coordinates;
    if (e >= max_rel_error) {
      max_rel_error = e;
      worst = where + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
  }
};

// Builds a scalar from tape leaves bound to `inputs`.
using ScalarGraph = std::function<ddpt::ad::Var(ddpt::ad::Tape&, const std::vector<ddpt::ad::Var>&)>;

inline double evaluate_graph(const ScalarGraph& f, const std::vector<Tensor>& inputs) {
  ddpt::ad::Tape tape(false);
  std::vector<ddpt::ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, false));
  return static_cast<double>(f(tape, leaves).value().item());
}

// Tape gradients against central differences for every input coordinate.
inline GradCheck check_graph(const ScalarGraph& f, std::vector<Tensor> inputs, double h = 1e-5) {
  std::vector<Tensor> analytic;
  {
    ddpt::ad::Tape tape;
    std::vector<ddpt::ad::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    auto out = f(tape, leaves);
    tape.backward(out);
    analytic = ddpt::ad::gradients(tape, leaves);
  }
  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const Scalar saved = inputs[i][j];
      inputs[i][j] = saved + static_cast<Scalar>(h);
      const double up = evaluate_graph(f, inputs);
      inputs[i][j] = saved - static_cast<Scalar>(h);
      const double down = evaluate_graph(f, inputs);
      inputs[i][j] = saved;
      result.add(analytic[i][j], (up - down) / (2.0 * h), "input " + std::to_string(i) + "[" + std::to_string(j) + "]");
    }
  }
  return result;
}

// Scalar readout sum(op(x) * weights) with fixed random weights, so every
// output coordinate contributes to the gradient with a distinct factor.
inline ddpt::ad::Var readout(ddpt::ad::Var y, const Tensor& weights) {
  return ddpt::ad::sum(ddpt::ad::mul(y, y.tape().constant(weights)));
}

inline long double softmax_cross_entropy_ld(const Tensor& logits, const std::vector<ddpt::TokenId>& targets) {
  long double total = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    long double z = 0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(static_cast<long double>(logits.at(r, c)));
    total += std::log(z) - static_cast<long double>(logits.at(r, static_cast<std::size_t>(targets[r])));
  }
  return total / static_cast<long double>(logits.rows());
}

// -------------------------------------------------------------- tiny models

struct TinySetup {
  ddpt::LanguageModel lm;
  ddpt::Denoiser denoiser;
  ddpt::PromptSample sample;
  ddpt::NoiseSchedule schedule;
};

// n_ctx 4, d_model 16, d_low 4, V 32, with every weight randomized (the
// up-projection included) so that no gradient path is identically zero.
inline TinySetup tiny_setup(std::uint64_t seed, std::size_t steps = 50) {
  Rng rng(seed);
  ddpt::LmConfig lc;
  lc.vocab_size = 32;
  lc.d_model = 16;
  lc.n_heads = 2;
  lc.encoder_layers = 1;
  lc.decoder_layers = 1;
  lc.d_ff = 32;
  lc.max_positions = 32;
  TinySetup s{ddpt::init_lm(lc, rng), {}, {}, ddpt::build_linear_schedule(steps, 1e-4, 0.2)};
  for (auto& p : s.lm.params) {
    for (auto& v : p.value.data()) v += static_cast<Scalar>(0.2 * rng.normal());
  }
  s.lm.params.set_frozen(true);

  ddpt::DenoiserConfig dc;
  dc.n_ctx = 4;
  dc.d_model = 16;
  dc.d_low = 4;
  dc.n_layers = 2;
  dc.n_heads = 2;
  dc.d_ff = 16;
  s.denoiser = ddpt::init_denoiser(dc, rng);
  for (auto& p : s.denoiser.params) {
    for (auto& v : p.value.data()) v += static_cast<Scalar>(0.3 * rng.normal());
  }
  s.sample.context = {5, 9, 14, 20};
  s.sample.instruction = {7, 11, 30};
  s.sample.target = {12, 6, 25, ddpt::Vocab::kEnd};
  return s;
}

// The ddpt_step objective rebuilt from public pieces with every pass's base
// held at the given tensors; the draws replay the step's rng stream.
inline double frozen_base_objective(const ddpt::Denoiser& denoiser, const ddpt::LanguageModel& lm,
                                    const ddpt::PromptSample& sample, const ddpt::NoiseSchedule& sched,
                                    const ddpt::TrainConfig& config, Rng rng, const std::vector<Tensor>& bases) {
  const Tensor context = ddpt::embed(lm.embedding_table(), sample.context);
  double lm_total = 0.0;
  double x0_total = 0.0;
  for (std::size_t pass = 0; pass < config.k; ++pass) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(1, sched.steps));
    const Tensor noise = rng.normal_tensor(context.shape());
    const Tensor x_t = ddpt::forward_perturb(bases[pass], t, noise, sched);
    const Tensor pred = ddpt::denoise(denoiser, x_t, t);
    Tensor prompt = pred;
    if (config.direction == ddpt::DirectionMode::Additive) {
      for (std::size_t i = 0; i < prompt.size(); ++i) prompt[i] += bases[pass][i];
    }
    lm_total += ddpt::prompt_loss(lm, prompt, sample);
    double se = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) se += (pred[i] - context[i]) * (pred[i] - context[i]);
    x0_total += se / static_cast<double>(pred.size());
  }
  const double k = static_cast<double>(config.k);
  double objective = lm_total / k;
  if (config.objective == ddpt::Objective::LmPlusX0) objective += config.x0_loss_weight * x0_total / k;
  return objective;
}

// Analytic ddpt_step gradients against central differences over every
// denoiser coordinate. With a detached chain the bases recorded by the step
// stay fixed under perturbation; otherwise the full chain is re-run.
inline GradCheck check_ddpt_step(TinySetup& s, const ddpt::TrainConfig& config, std::uint64_t rng_seed,
                                 double h = 1e-5) {
  const Rng start(rng_seed);
  Rng rng = start;
  const ddpt::StepResult step = ddpt::ddpt_step(s.denoiser, s.lm, s.sample, s.schedule, config, rng, true);
  std::vector<Tensor> bases;
  for (const auto& p : step.passes) bases.push_back(p.base);
  auto objective = [&]() {
    if (config.detach_chain) return frozen_base_objective(s.denoiser, s.lm, s.sample, s.schedule, config, start, bases);
    Rng r = start;
    return ddpt::ddpt_step(s.denoiser, s.lm, s.sample, s.schedule, config, r).loss;
  };
  GradCheck result;
  for (std::size_t i = 0; i < s.denoiser.params.size(); ++i) {
    auto& param = s.denoiser.params.at(i);
    for (std::size_t j = 0; j < param.value.size(); ++j) {
      const Scalar saved = param.value[j];
      param.value[j] = saved + static_cast<Scalar>(h);
      const double up = objective();
      param.value[j] = saved - static_cast<Scalar>(h);
      const double down = objective();
      param.value[j] = saved;
      result.add(step.grads[i][j], (up - down) / (2.0 * h), param.name + "[" + std::to_string(j) + "]");
    }
  }
  return result;
}

// ----------------------------------------------------------------- metrics

using Tokens = std::vector<std::string>;

inline std::map<Tokens, int> ngrams(const Tokens& t, std::size_t n) {
  std::map<Tokens, int> out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + long(i), t.begin() + long(i + n))];
  return out;
}

struct BleuCounts {
  long double match[4] = {0, 0, 0, 0};
  long double total[4] = {0, 0, 0, 0};
  long double c = 0;
  long double r = 0;
};

inline void add_bleu_counts(BleuCounts& acc, const Tokens& cand, const Tokens& ref, const std::set<std::string>& kw,
                            long double kw_weight) {
  acc.c += cand.size();
  acc.r += ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cg = ngrams(cand, n);
    const auto rg = ngrams(ref, n);
    for (const auto& [g, k] : cg) {
      const long double w = (n == 1 && kw.count(g[0])) ? kw_weight : 1.0L;
      const auto it = rg.find(g);
      const int clipped = it == rg.end() ? 0 : std::min(k, it->second);
      acc.match[n - 1] += w * clipped;
      acc.total[n - 1] += w * k;
    }
  }
}

inline double bleu_from_counts(const BleuCounts& a) {
  if (a.c == 0) return 0.0;
  long double prod = 1;
  for (int n = 0; n < 4; ++n) prod *= (a.match[n] + 1) / (a.total[n] + 1);
  const long double bp = a.c < a.r ? std::exp(1 - a.r / a.c) : 1.0L;
  return static_cast<double>(bp * std::pow(prod, 0.25L));
}

inline double bleu(const Tokens& cand, const Tokens& ref, const std::set<std::string>& kw = {},
                   long double kw_weight = 1) {
  BleuCounts acc;
  add_bleu_counts(acc, cand, ref, kw, kw_weight);
  return bleu_from_counts(acc);
}

inline double corpus_bleu(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs) {
  BleuCounts acc;
  for (std::size_t i = 0; i < cands.size(); ++i) add_bleu_counts(acc, cands[i], refs[i], {}, 1);
  return bleu_from_counts(acc);
}

inline double chrf(const std::string& cand, const std::string& ref, std::size_t max_n = 6, double beta = 2.0) {
  std::string c;
  std::string r;
  for (char ch : cand) {
    if (!std::isspace(static_cast<unsigned char>(ch))) c.push_back(ch);
  }
  for (char ch : ref) {
    if (!std::isspace(static_cast<unsigned char>(ch))) r.push_back(ch);
  }
  std::vector<long double> precisions;
  std::vector<long double> recalls;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::multiset<std::string> cg;
    std::multiset<std::string> rg;
    for (std::size_t i = 0; i + n <= c.size(); ++i) cg.insert(c.substr(i, n));
    for (std::size_t i = 0; i + n <= r.size(); ++i) rg.insert(r.substr(i, n));
    long double common = 0;
    std::multiset<std::string> pool = rg;
    for (const auto& g : cg) {
      auto it = pool.find(g);
      if (it != pool.end()) {
        ++common;
        pool.erase(it);
      }
    }
    if (!cg.empty()) precisions.push_back(common / cg.size());
    if (!rg.empty()) recalls.push_back(common / rg.size());
  }
  auto avg = [](const std::vector<long double>& v) {
    long double s = 0;
    for (auto x : v) s += x;
    return v.empty() ? 0.0L : s / v.size();
  };
  const long double p = avg(precisions);
  const long double rec = avg(recalls);
  if (p + rec == 0) return 0.0;
  const long double b2 = beta * beta;
  return static_cast<double>((1 + b2) * p * rec / (b2 * p + rec));
}

// Longest common subsequence by exhaustive recursion with memoization.
inline std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::max(go(i + 1, j), go(i, j + 1));
    if (a[i] == b[j]) best = std::max(best, 1 + go(i + 1, j + 1));
    return memo[key] = best;
  };
  return go(0, 0);
}

inline double rouge_l(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const long double l = lcs(cand, ref);
  if (l == 0) return 0.0;
  const long double p = l / cand.size();
  const long double r = l / ref.size();
  return static_cast<double>(2 * p * r / (p + r));
}

// Suffix table applied rule by rule: the first rule whose suffix matches and
// leaves at least three characters fires.
inline std::string stem(const std::string& word) {
  std::string w;
  for (char ch : word) w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  const std::vector<std::pair<std::string, std::string>> table = {
      {"edly", ""}, {"ies", "y"}, {"ing", ""}, {"est", ""}, {"ed", ""}, {"es", ""}, {"ly", ""}, {"er", ""}, {"s", ""}};
  for (const auto& [suffix, repl] : table) {
    if (w.size() < suffix.size() + 3) continue;
    if (w.compare(w.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    if (suffix == "s" && w.size() >= 2 && w[w.size() - 2] == 's') return w;
    std::string base = w.substr(0, w.size() - suffix.size());
    if (!repl.empty()) return base + repl;
    const char last = base.back();
    const bool vowel = std::string("aeiouy").find(last) != std::string::npos;
    const bool keeps_double = std::string("lsz").find(last) != std::string::npos;
    if (std::isalpha(static_cast<unsigned char>(last)) && !vowel && !keeps_double && base.size() >= 2 &&
        base[base.size() - 2] == last) {
      base.pop_back();
    }
    return base;
  }
  return w;
}

// Exact stage then stem stage; each candidate word takes the leftmost unused
// reference word with the same key. Chunks are maximal runs that are
// contiguous in both sentences.
inline double meteor(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<int> link(cand.size(), -1);
  std::vector<bool> taken(ref.size(), false);
  for (int stage = 0; stage < 2; ++stage) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (link[i] != -1) continue;
      const std::string key = stage == 0 ? cand[i] : stem(cand[i]);
      for (std::size_t j = 0; j < ref.size(); ++j) {
        const std::string other = stage == 0 ? ref[j] : stem(ref[j]);
        if (!taken[j] && other == key) {
          link[i] = static_cast<int>(j);
          taken[j] = true;
          break;
        }
      }
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (link[i] != -1) pairs.emplace_back(static_cast<int>(i), link[i]);
  }
  if (pairs.empty()) return 0.0;
  long double chunks = 1;
  for (std::size_t p = 1; p < pairs.size(); ++p) {
    const bool continues = pairs[p].first == pairs[p - 1].first + 1 && pairs[p].second == pairs[p - 1].second + 1;
    if (!continues) ++chunks;
  }
  const long double m = pairs.size();
  const long double p = m / cand.size();
  const long double r = m / ref.size();
  const long double fmean = 10 * p * r / (r + 9 * p);
  const long double frag = chunks / m;
  return static_cast<double>(fmean * (1 - 0.5L * frag * frag * frag));
}

// Structure-only serialization of every non-leaf subtree, built directly
// from the tree.
inline void structural_subtrees(const ddpt::MiniAst& node, std::vector<std::string>& out) {
  std::function<std::string(const ddpt::MiniAst&)> shape = [&](const ddpt::MiniAst& n) {
    std::string s = "(";
    s += ddpt::kind_name(n.kind);
    if (n.kind == ddpt::NodeKind::BinaryOp) s += " " + n.text;
    for (const auto& c : n.children) s += " " + shape(c);
    return s + ")";
  };
  if (node.children.empty()) return;
  out.push_back(shape(node));
  for (const auto& c : node.children) structural_subtrees(c, out);
}

inline double ast_score(const std::string& cand, const std::string& ref) {
  std::vector<std::string> ref_subtrees;
  std::vector<std::string> cand_subtrees;
  try {
    structural_subtrees(ddpt::parse_mini(ref), ref_subtrees);
  } catch (const ddpt::ParseError&) {
    return 0.0;
  }
  try {
    structural_subtrees(ddpt::parse_mini(cand), cand_subtrees);
  } catch (const ddpt::ParseError&) {
    return 0.0;
  }
  if (ref_subtrees.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : ref_subtrees) {
    hit += std::find(cand_subtrees.begin(), cand_subtrees.end(), s) != cand_subtrees.end() ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(ref_subtrees.size());
}

inline double codebleu(const std::string& cand, const std::string& ref) {
  const Tokens c = ddpt::tokenize(cand);
  const Tokens r = ddpt::tokenize(ref);
  const std::set<std::string> kw(ddpt::mini_keywords().begin(), ddpt::mini_keywords().end());
  return (bleu(c, r) + bleu(c, r, kw, 4) + ast_score(cand, ref)) / 3.0;
}

// Random small programs in the mini-language, plus token-level corruptions
// so that both parseable and unparseable candidates occur.
inline std::string random_expr(Rng& rng, int depth) {
  static const char* names[] = {"a", "b", "x", "y", "total", "count"};
  static const char* ops[] = {"+", "-", "*", "/", "%", "<", ">", "==", "and", "or"};
  const auto pick = rng.uniform_int(0, depth > 0 ? 4 : 1);
  if (pick == 0) return names[rng.uniform_int(0, 5)];
  if (pick == 1) return std::to_string(rng.uniform_int(0, 20));
  if (pick == 2) return "(" + random_expr(rng, depth - 1) + ")";
  if (pick == 3) return std::string(rng.uniform() < 0.5 ? "max" : "min") + "(" + random_expr(rng, depth - 1) + ", " +
                        random_expr(rng, depth - 1) + ")";
  const std::string op = ops[rng.uniform_int(0, 9)];
  std::string lhs = random_expr(rng, depth - 1);
  std::string rhs = random_expr(rng, depth - 1);
  // comparisons do not chain in the grammar
  if (op == "<" || op == ">" || op == "==") {
    if (lhs.find(' ') != std::string::npos) lhs = "(" + lhs + ")";
    if (rhs.find(' ') != std::string::npos) rhs = "(" + rhs + ")";
  }
  return lhs + " " + op + " " + rhs;
}

inline std::string random_statement(Rng& rng, bool allow_if = true) {
  static const char* names[] = {"a", "b", "x", "y", "total", "count"};
  const auto kind = rng.uniform_int(0, allow_if ? 2 : 1);
  if (kind == 0) return std::string(names[rng.uniform_int(0, 5)]) + " = " + random_expr(rng, 2);
  if (kind == 1) return "return " + random_expr(rng, 2);
  std::string s = "if " + random_expr(rng, 1) + ": " + random_statement(rng, false);
  if (rng.uniform() < 0.5) s += " else: " + random_statement(rng, false);
  return s;
}

inline std::string random_program(Rng& rng) {
  std::string out;
  const auto n = rng.uniform_int(1, 3);
  for (std::uint64_t i = 0; i < n; ++i) out += (i ? "\n" : "") + random_statement(rng);
  return out;
}

// Swaps, drops or replaces a few tokens of `code`.
inline std::string corrupt(const std::string& code, Rng& rng) {
  Tokens t = ddpt::tokenize(code);
  const auto edits = rng.uniform_int(0, 3);
  for (std::uint64_t e = 0; e < edits && !t.empty(); ++e) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, t.size() - 1));
    switch (rng.uniform_int(0, 3)) {
      case 0: t.erase(t.begin() + long(i)); break;
      case 1: std::swap(t[i], t[static_cast<std::size_t>(rng.uniform_int(0, t.size() - 1))]); break;
      case 2: t[i] = rng.uniform() < 0.5 ? "returned" : "counts"; break;
      default: t.insert(t.begin() + long(i), t[i]); break;
    }
  }
  return ddpt::detokenize(t);
}

}  // namespace oracle
