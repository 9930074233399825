// SPDX-License-Identifier: Apache-2.0
#include "ddpt/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "ddpt/error.hpp"

namespace ddpt {

namespace {

std::string csv_quote(const std::string& field) {
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

double squared_norm(std::span<const Scalar> v) {
  double s = 0.0;
  for (auto x : v) s += double(x) * double(x);
  return s;
}

double norm(std::span<const Scalar> v) { return std::sqrt(squared_norm(v)); }

}  // namespace

double cosine(std::span<const Scalar> a, std::span<const Scalar> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: widths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  const double na2 = squared_norm(a);
  const double nb2 = squared_norm(b);
  if (na2 == 0.0 || nb2 == 0.0) throw DegenerateInputError("cosine: zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * double(b[i]);
  // sqrt of the product keeps cosine(v, v) exactly 1.
  return std::clamp(dot / std::sqrt(na2 * nb2), -1.0, 1.0);
}

std::vector<Neighbor> top_k_nearest(std::span<const Scalar> query, const Tensor& table, const Vocab& vocab,
                                    std::size_t k) {
  if (table.rows() != vocab.size()) {
    throw DimensionError("top_k_nearest: table has " + std::to_string(table.rows()) + " rows for a vocabulary of " +
                         std::to_string(vocab.size()));
  }
  const std::size_t candidates = vocab.size() - Vocab::kReservedCount;
  if (k < 1 || k > candidates) {
    throw ConfigError("top_k_nearest: k = " + std::to_string(k) + " outside [1, " + std::to_string(candidates) + "]");
  }
  if (norm(query) == 0.0) throw DegenerateInputError("top_k_nearest: zero query vector");
  std::vector<Neighbor> scored;
  scored.reserve(candidates);
  for (std::size_t id = Vocab::kReservedCount; id < table.rows(); ++id) {
    auto row = table.row(id);
    if (norm(row) == 0.0) {
      std::cerr << "warning: skipping zero-norm embedding row " << id << " ('" << vocab.token(TokenId(id)) << "')\n";
      continue;
    }
    scored.push_back(Neighbor{TokenId(id), vocab.token(TokenId(id)), cosine(query, row)});
  }
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.score != b.score ? a.score > b.score : a.id < b.id;
                    });
  scored.resize(keep);
  return scored;
}

NeighborReport interpret_context(const Tensor& optimized_context, const Vocab& vocab, const Tensor& table,
                                 std::size_t k) {
  if (k < 1) throw ConfigError("interpret_context: k must be >= 1");
  NeighborReport report;
  report.k = k;
  report.vectors = optimized_context;
  for (std::size_t pos = 0; pos < optimized_context.rows(); ++pos) {
    report.positions.push_back(PositionNeighbors{pos, top_k_nearest(optimized_context.row(pos), table, vocab, k)});
  }
  return report;
}

std::size_t NeighborReport::shared_nearest_count() const {
  std::map<TokenId, std::size_t> firsts;
  for (const auto& p : positions) {
    if (!p.neighbors.empty()) ++firsts[p.neighbors.front().id];
  }
  std::size_t shared = 0;
  for (const auto& [id, count] : firsts) {
    if (count > 1) shared += count;
  }
  return shared;
}

nlohmann::json NeighborReport::to_json() const {
  nlohmann::json positions_json = nlohmann::json::array();
  for (const auto& p : positions) {
    nlohmann::json neighbors = nlohmann::json::array();
    for (const auto& n : p.neighbors) neighbors.push_back({{"id", n.id}, {"word", n.word}, {"score", n.score}});
    nlohmann::json vec = nlohmann::json::array();
    if (!vectors.empty()) {
      for (auto v : vectors.row(p.position)) vec.push_back(double(v));
    }
    positions_json.push_back({{"position", p.position}, {"neighbors", neighbors}, {"vector", vec}});
  }
  return {{"k", k}, {"shared_nearest_count", shared_nearest_count()}, {"positions", positions_json}};
}

std::string NeighborReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "position,rank,word,score\n";
  for (const auto& p : positions) {
    for (std::size_t r = 0; r < p.neighbors.size(); ++r) {
      out << p.position << ',' << r + 1 << ',' << csv_quote(p.neighbors[r].word) << ',' << p.neighbors[r].score << '\n';
    }
  }
  return out.str();
}

}  // namespace ddpt
