// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace ddpt {

// Splits on whitespace; identifier/number runs stay whole, the two-character
// operators (==, !=, <=, >=) are kept together and any other punctuation
// character is its own token.
std::vector<std::string> tokenize(std::string_view text);
// Joins with single spaces; tokenize(detokenize(t)) == t for tokenizer output.
std::string detokenize(std::span<const std::string> tokens);

using TokenId = std::int32_t;

// Ids 0..3 are reserved, in order, for pad, begin, end and unknown.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBegin = 1;
  static constexpr TokenId kEnd = 2;
  static constexpr TokenId kUnknown = 3;
  static constexpr TokenId kReservedCount = 4;

  Vocab();
  explicit Vocab(const std::vector<std::string>& words);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.contains(token); }
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  static bool is_reserved(TokenId id) { return id >= 0 && id < kReservedCount; }

  std::vector<TokenId> encode(std::string_view text) const;
  // Reserved ids are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& doc);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Most frequent tokens first, ties broken lexicographically; `max_size`
// counts the reserved entries.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size);

}  // namespace ddpt
