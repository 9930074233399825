// SPDX-License-Identifier: Apache-2.0
#include "ddpt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "ddpt/error.hpp"
#include "ddpt/mini_lang.hpp"
#include "ddpt/text.hpp"

namespace ddpt {

void NgramStats::merge(const NgramStats& other) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  candidate_length += other.candidate_length;
  reference_length += other.reference_length;
}

namespace {

using Counts = std::map<std::vector<std::string>, double>;

Counts count_ngrams(const Tokens& tokens, std::size_t n) {
  Counts out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    out[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))] +=
        1.0;
  }
  return out;
}

std::string strip_whitespace(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

}  // namespace

NgramStats ngram_stats(const Tokens& candidate, const Tokens& reference, const std::set<std::string>& keywords,
                       double keyword_weight) {
  NgramStats s;
  s.candidate_length = static_cast<double>(candidate.size());
  s.reference_length = static_cast<double>(reference.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    const Counts cand = count_ngrams(candidate, n);
    const Counts ref = count_ngrams(reference, n);
    for (const auto& [gram, count] : cand) {
      const double w = n == 1 && keywords.count(gram.front()) ? keyword_weight : 1.0;
      s.totals[n - 1] += w * count;
      auto it = ref.find(gram);
      if (it != ref.end()) s.matches[n - 1] += w * std::min(count, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const NgramStats& s) {
  if (s.candidate_length == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) log_sum += std::log((s.matches[n] + 1.0) / (s.totals[n] + 1.0));
  const double bp =
      s.candidate_length < s.reference_length ? std::exp(1.0 - s.reference_length / s.candidate_length) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double bleu4(const Tokens& candidate, const Tokens& reference) {
  return bleu_from_stats(ngram_stats(candidate, reference));
}

double corpus_bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) throw DimensionError("corpus_bleu4: candidate/reference counts differ");
  if (candidates.empty()) throw UsageError("corpus_bleu4: no candidates to score");
  NgramStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total.merge(ngram_stats(candidates[i], references[i]));
  return bleu_from_stats(total);
}

double chrf(std::string_view candidate, std::string_view reference, std::size_t max_order, double beta) {
  const std::string c = strip_whitespace(candidate);
  const std::string r = strip_whitespace(reference);
  if (r.empty()) {
    std::cerr << "warning: chrf against an empty reference scores 0\n";
    return 0.0;
  }
  double p_sum = 0.0;
  double r_sum = 0.0;
  std::size_t p_orders = 0;
  std::size_t r_orders = 0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    std::map<std::string, double> cc;
    std::map<std::string, double> rc;
    for (std::size_t i = 0; i + n <= c.size(); ++i) cc[c.substr(i, n)] += 1.0;
    for (std::size_t i = 0; i + n <= r.size(); ++i) rc[r.substr(i, n)] += 1.0;
    double matched = 0.0;
    for (const auto& [g, k] : cc) {
      auto it = rc.find(g);
      if (it != rc.end()) matched += std::min(k, it->second);
    }
    if (c.size() >= n) {
      p_sum += matched / static_cast<double>(c.size() - n + 1);
      ++p_orders;
    }
    if (r.size() >= n) {
      r_sum += matched / static_cast<double>(r.size() - n + 1);
      ++r_orders;
    }
  }
  const double p = p_orders ? p_sum / static_cast<double>(p_orders) : 0.0;
  const double rec = r_orders ? r_sum / static_cast<double>(r_orders) : 0.0;
  if (p == 0.0 && rec == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * p * rec / (b2 * p + rec);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<std::size_t> prev(reference.size() + 1, 0);
  std::vector<std::size_t> cur(reference.size() + 1, 0);
  for (const auto& ct : candidate) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = ct == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev.back());
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

std::string stem(std::string_view word) {
  std::string w;
  for (char c : word) w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
  };
  static constexpr Rule rules[] = {{"edly", ""}, {"ies", "y"}, {"ing", ""}, {"est", ""}, {"ed", ""},
                                   {"es", ""},   {"ly", ""},   {"er", ""},  {"s", ""}};
  for (const auto& rule : rules) {
    if (w.size() < rule.suffix.size() + 3 || !w.ends_with(rule.suffix)) continue;
    if (rule.suffix == "s" && w.ends_with("ss")) break;
    w.resize(w.size() - rule.suffix.size());
    if (!rule.replacement.empty()) {
      w += rule.replacement;
      break;
    }
    const char last = w.back();
    const bool consonant = std::isalpha(static_cast<unsigned char>(last)) &&
                           std::string_view("aeiouy").find(last) == std::string_view::npos;
    if (consonant && w[w.size() - 2] == last && std::string_view("lsz").find(last) == std::string_view::npos) {
      w.pop_back();
    }
    break;
  }
  return w;
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<long> align(candidate.size(), -1);
  std::vector<bool> used(reference.size(), false);
  auto stage = [&](auto key) {
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (align[i] >= 0) continue;
      const std::string k = key(candidate[i]);
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (!used[j] && key(reference[j]) == k) {
          align[i] = static_cast<long>(j);
          used[j] = true;
          break;
        }
      }
    }
  };
  stage([](const std::string& t) { return t; });
  stage([](const std::string& t) { return stem(t); });

  double m = 0.0;
  double chunks = 0.0;
  long prev_i = -2;
  long prev_j = -2;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (align[i] < 0) continue;
    m += 1.0;
    const long ii = static_cast<long>(i);
    if (!(ii == prev_i + 1 && align[i] == prev_j + 1)) chunks += 1.0;
    prev_i = ii;
    prev_j = align[i];
  }
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(chunks / m, 3.0);
  return fmean * (1.0 - penalty);
}

AstMatch ast_match(std::string_view candidate, std::string_view reference) {
  AstMatch out;
  std::vector<std::string> ref_sigs;
  try {
    ref_sigs = subtree_signatures(parse_mini(reference));
  } catch (const ParseError&) {
    out.reference_parsed = false;
    return out;
  }
  out.total = static_cast<double>(ref_sigs.size());
  std::unordered_set<std::string> cand_sigs;
  try {
    for (auto& s : subtree_signatures(parse_mini(candidate))) cand_sigs.insert(std::move(s));
  } catch (const ParseError&) {
    out.candidate_parsed = false;
    return out;
  }
  for (const auto& s : ref_sigs) out.matched += cand_sigs.count(s) ? 1.0 : 0.0;
  return out;
}

namespace {

const std::set<std::string>& keyword_set() {
  static const std::set<std::string> words(mini_keywords().begin(), mini_keywords().end());
  return words;
}

}  // namespace

double codebleu_lite(std::string_view candidate, std::string_view reference) {
  const Tokens c = tokenize(candidate);
  const Tokens r = tokenize(reference);
  const double plain = bleu_from_stats(ngram_stats(c, r));
  const double weighted = bleu_from_stats(ngram_stats(c, r, keyword_set(), kKeywordWeight));
  return (plain + weighted + ast_match(candidate, reference).score()) / 3.0;
}

double corpus_codebleu_lite(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) {
    throw DimensionError("corpus_codebleu_lite: candidate/reference counts differ");
  }
  NgramStats plain;
  NgramStats weighted;
  double matched = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Tokens c = tokenize(candidates[i]);
    const Tokens r = tokenize(references[i]);
    plain.merge(ngram_stats(c, r));
    weighted.merge(ngram_stats(c, r, keyword_set(), kKeywordWeight));
    const AstMatch a = ast_match(candidates[i], references[i]);
    matched += a.matched;
    total += a.total;
  }
  const double ast = total > 0.0 ? matched / total : 0.0;
  return (bleu_from_stats(plain) + bleu_from_stats(weighted) + ast) / 3.0;
}

double MetricReport::get(const std::string& metric) const {
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (metrics[i] == metric) return aggregate[i];
  }
  throw ConfigError("metric '" + metric + "' is not in the report");
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json agg = nlohmann::json::object();
  for (std::size_t i = 0; i < metrics.size(); ++i) agg[metrics[i]] = aggregate[i];
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json row{{"index", s.index}};
    for (std::size_t i = 0; i < metrics.size(); ++i) row[metrics[i]] = s.values[i];
    rows.push_back(std::move(row));
  }
  return {{"metrics", metrics}, {"count", samples.size()}, {"aggregate", agg}, {"samples", rows}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.metrics = j.at("metrics").get<std::vector<std::string>>();
    for (const auto& m : r.metrics) r.aggregate.push_back(j.at("aggregate").at(m).get<double>());
    for (const auto& row : j.at("samples")) {
      SampleScores s;
      s.index = row.at("index").get<std::size_t>();
      for (const auto& m : r.metrics) s.values.push_back(row.at(m).get<double>());
      r.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "index";
  for (const auto& m : metrics) out << ',' << m;
  out << '\n';
  for (const auto& s : samples) {
    out << s.index;
    for (double v : s.values) out << ',' << v;
    out << '\n';
  }
  out << "aggregate";
  for (double v : aggregate) out << ',' << v;
  out << '\n';
  return out.str();
}

MetricReport evaluate_texts(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                            const std::vector<std::string>& enabled) {
  if (candidates.size() != references.size()) {
    throw DimensionError("evaluate: " + std::to_string(candidates.size()) + " candidates for " +
                         std::to_string(references.size()) + " references");
  }
  if (candidates.empty()) throw UsageError("evaluate: no candidates to score");
  MetricReport report;
  for (const auto& name : metric_names()) {
    if (enabled.empty() || std::find(enabled.begin(), enabled.end(), name) != enabled.end()) {
      report.metrics.push_back(name);
    }
  }
  for (const auto& name : enabled) {
    if (std::find(metric_names().begin(), metric_names().end(), name) == metric_names().end()) {
      throw ConfigError("unknown metric '" + name + "'");
    }
  }
  std::vector<Tokens> ctoks;
  std::vector<Tokens> rtoks;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ctoks.push_back(tokenize(candidates[i]));
    rtoks.push_back(tokenize(references[i]));
  }
  std::vector<double> sums(report.metrics.size(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    SampleScores s{i, {}};
    for (std::size_t m = 0; m < report.metrics.size(); ++m) {
      const std::string& name = report.metrics[m];
      double v = 0.0;
      if (name == "bleu4") v = bleu4(ctoks[i], rtoks[i]);
      else if (name == "chrf") v = chrf(candidates[i], references[i]);
      else if (name == "rouge_l") v = rouge_l(ctoks[i], rtoks[i]);
      else if (name == "meteor") v = meteor_lite(ctoks[i], rtoks[i]);
      else v = codebleu_lite(candidates[i], references[i]);
      s.values.push_back(v);
      sums[m] += v;
    }
    report.samples.push_back(std::move(s));
  }
  for (std::size_t m = 0; m < report.metrics.size(); ++m) {
    if (report.metrics[m] == "bleu4") {
      report.aggregate.push_back(corpus_bleu4(ctoks, rtoks));
    } else {
      report.aggregate.push_back(sums[m] / static_cast<double>(candidates.size()));
    }
  }
  return report;
}

std::vector<EvalPair> read_eval_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  std::vector<EvalPair> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      out.push_back({doc.at("candidate").get<std::string>(), doc.at("reference").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_eval_jsonl(const std::string& path, const std::vector<EvalPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path);
  for (const auto& p : pairs) out << nlohmann::json{{"candidate", p.candidate}, {"reference", p.reference}}.dump() << '\n';
}

}  // namespace ddpt
