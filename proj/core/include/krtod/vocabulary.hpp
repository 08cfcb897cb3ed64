#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "krtod/types.hpp"

namespace krtod {

// Closed word-level vocabulary. Ids 0..9 are always the structural symbols
// (see tok::), in that order; content words follow in insertion order.
class Vocabulary {
 public:
  Vocabulary();

  // Builds from a full token list whose first entries must be the structural
  // symbols, as written by save_vocabulary.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  TokenId add(std::string_view token);
  TokenId id(std::string_view token) const;  // throws DomainError when unknown
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Whitespace tokenization; unknown words throw DomainError.
  Tokens encode(std::string_view text) const;
  std::string decode(TokenSpan ids) const;

  // Stable digest of the token list, stored in checkpoints.
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  static const std::vector<std::string>& structural_tokens();

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<std::string> split_words(std::string_view text);

}  // namespace krtod
