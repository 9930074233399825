// SPDX-License-Identifier: Apache-2.0
#include "ddpt/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "ddpt/error.hpp"

namespace ddpt {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

bool is_two_char_operator(char a, char b) {
  return b == '=' && (a == '=' || a == '!' || a == '<' || a == '>');
}

const char* kReservedTokens[] = {"<pad>", "<s>", "</s>", "<unk>"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (i + 1 < text.size() && is_two_char_operator(text[i], text[i + 1])) {
      out.emplace_back(text.substr(i, 2));
      i += 2;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& words) {
  for (const char* r : kReservedTokens) {
    index_.emplace(r, static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(r);
  }
  for (const auto& w : words) {
    if (index_.contains(w)) throw VocabularyError("duplicate vocabulary entry '" + w + "'");
    index_.emplace(w, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(w);
  }
}

TokenId Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  for (auto id : ids) {
    if (!is_reserved(id)) words.push_back(token(id));
  }
  return detokenize(words);
}

nlohmann::json Vocab::to_json() const {
  return nlohmann::json{{"tokens", std::vector<std::string>(tokens_.begin() + kReservedCount, tokens_.end())}};
}

Vocab Vocab::from_json(const nlohmann::json& doc) {
  try {
    return Vocab(doc.at("tokens").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed vocabulary document: ") + e.what());
  }
}

Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size) {
  if (corpus.empty()) throw IngestionError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : tokenize(text)) ++counts[tok];
  }
  for (const char* r : kReservedTokens) counts.erase(r);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep =
      max_size > Vocab::kReservedCount ? std::min(ranked.size(), max_size - Vocab::kReservedCount) : 0;
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(ranked[i].first);
  return Vocab(words);
}

}  // namespace ddpt
