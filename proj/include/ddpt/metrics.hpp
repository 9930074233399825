// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ddpt {

using Tokens = std::vector<std::string>;

// Clipped n-gram matches and candidate n-gram totals for n = 1..4, plus the
// lengths needed for the brevity penalty. Sums over a corpus by merge().
struct NgramStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double candidate_length = 0.0;
  double reference_length = 0.0;

  void merge(const NgramStats& other);
};

// Unigram matches and totals are weighted by `weight_of(token)`; n >= 2 counts
// are unweighted. An empty keyword set gives plain BLEU statistics.
NgramStats ngram_stats(const Tokens& candidate, const Tokens& reference,
                       const std::set<std::string>& keywords = {}, double keyword_weight = 1.0);

// Geometric mean of add-one smoothed precisions (m + 1) / (t + 1) times the
// brevity penalty exp(1 - r / c) when c < r. Zero for an empty candidate.
double bleu_from_stats(const NgramStats& stats);

double bleu4(const Tokens& candidate, const Tokens& reference);
// Corpus-level: statistics pooled over all pairs; UsageError when empty.
double corpus_bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

// Character n-gram F-score (n = 1..max_order, whitespace removed). Precision is
// averaged over the orders where the candidate has n-grams, recall over the
// orders where the reference has them. An empty reference scores 0 with a warning.
double chrf(std::string_view candidate, std::string_view reference, std::size_t max_order = 6, double beta = 2.0);

// F1 of the longest common subsequence.
double rouge_l(const Tokens& candidate, const Tokens& reference);

// Suffix-table stemmer used by the METEOR stem stage.
std::string stem(std::string_view word);

// Exact then stem alignment, Fmean = 10PR / (R + 9P), fragmentation penalty
// 0.5 (chunks / matches)^3.
double meteor_lite(const Tokens& candidate, const Tokens& reference);

// Fraction of the reference's subtree signatures that also occur in the
// candidate's parse. An unparseable candidate matches nothing.
struct AstMatch {
  double matched = 0.0;
  double total = 0.0;
  bool candidate_parsed = true;
  bool reference_parsed = true;

  double score() const { return total > 0.0 ? matched / total : 0.0; }
};
AstMatch ast_match(std::string_view candidate, std::string_view reference);

constexpr double kKeywordWeight = 4.0;

// Equal-weight mean of BLEU-4, keyword-weighted BLEU-4 and AST subtree match.
double codebleu_lite(std::string_view candidate, std::string_view reference);
double corpus_codebleu_lite(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"bleu4", "chrf", "rouge_l", "meteor", "codebleu"};
  return names;
}

struct SampleScores {
  std::size_t index = 0;
  std::vector<double> values;  // aligned with MetricReport::metrics
};

struct MetricReport {
  std::vector<std::string> metrics;
  std::vector<double> aggregate;
  std::vector<SampleScores> samples;

  double get(const std::string& metric) const;
  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  // index,<metric>...; the last row carries the aggregate with index "aggregate".
  std::string to_csv() const;
};

// Scores candidate/reference pairs. Aggregates are per-sample means except
// BLEU-4, which is the pooled corpus score. An empty `enabled` selects all.
MetricReport evaluate_texts(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                            const std::vector<std::string>& enabled = {});

struct EvalPair {
  std::string candidate;
  std::string reference;
};
// One {"candidate": ..., "reference": ...} object per line.
std::vector<EvalPair> read_eval_jsonl(const std::string& path);
void write_eval_jsonl(const std::string& path, const std::vector<EvalPair>& pairs);

}  // namespace ddpt
