#include "krtod/vocabulary.hpp"

#include <sstream>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"

namespace krtod {

const std::vector<std::string>& Vocabulary::structural_tokens() {
  static const std::vector<std::string> kTokens = {
      "<pad>", "<bos>", "<eos>", "<null>", "<sep>", "<u>", "<r>", "<kb>", "<eoa>", "<eok>"};
  return kTokens;
}

Vocabulary::Vocabulary() {
  for (const auto& t : structural_tokens()) add(t);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  const auto& reserved = structural_tokens();
  if (tokens.size() < reserved.size())
    throw ParseError("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (tokens[i] != reserved[i])
      throw ParseError("reserved token '" + reserved[i] + "' expected at position " + std::to_string(i),
                       i + 1);
  }
  Vocabulary v;
  for (std::size_t i = reserved.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw ParseError("duplicate token '" + tokens[i] + "'", i + 1);
    v.add(tokens[i]);
  }
  return v;
}

TokenId Vocabulary::add(std::string_view token) {
  if (token.empty()) throw DomainError("empty token");
  for (char c : token) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
      throw DomainError("token contains whitespace: '" + std::string(token) + "'");
  }
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw DomainError("unknown token '" + std::string(token) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DomainError("token id " + std::to_string(id) + " out of vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

Tokens Vocabulary::encode(std::string_view text) const {
  Tokens out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(TokenSpan ids) const {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a("krtod-vocab");
  for (const auto& t : tokens_) h = fnv1a(t, hash_combine(h, t.size()));
  return h;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(std::move(w));
  return words;
}

}  // namespace krtod
