// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpt/tensor.hpp"
#include "ddpt/text.hpp"

namespace ddpt {

struct Neighbor {
  TokenId id = 0;
  std::string word;
  double score = 0.0;
};

struct PositionNeighbors {
  std::size_t position = 0;
  std::vector<Neighbor> neighbors;
};

struct NeighborReport {
  std::size_t k = 0;
  std::vector<PositionNeighbors> positions;
  // The optimized rows, so external tools can project them.
  Tensor vectors;

  // Positions whose nearest word is also some other position's nearest word.
  std::size_t shared_nearest_count() const;
  nlohmann::json to_json() const;
  // position,rank,word,score
  std::string to_csv() const;
};

double cosine(std::span<const Scalar> a, std::span<const Scalar> b);

// Exact scan over the non-reserved rows of `table`, descending by cosine,
// ties broken by ascending id. Zero-norm rows are skipped with a warning.
std::vector<Neighbor> top_k_nearest(std::span<const Scalar> query, const Tensor& table, const Vocab& vocab,
                                    std::size_t k);

NeighborReport interpret_context(const Tensor& optimized_context, const Vocab& vocab, const Tensor& table,
                                 std::size_t k = 5);

}  // namespace ddpt
