#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace krtod {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;
using TokenSpan = std::span<const TokenId>;

// One byte per knowledge-base entry, 1 = selected.
using KbMask = std::vector<std::uint8_t>;

using Rng = std::mt19937_64;

// Fixed ids. 0-4 are the reserved vocabulary symbols; 5-9 are the field and
// segment markers used to lay out model inputs and outputs.
namespace tok {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kNull = 3;
inline constexpr TokenId kSep = 4;
inline constexpr TokenId kUserField = 5;
inline constexpr TokenId kResponseField = 6;
inline constexpr TokenId kKnowledgeField = 7;
inline constexpr TokenId kEndOfAct = 8;        // act | response boundary in generator output
inline constexpr TokenId kEndOfKnowledge = 9;  // xi | act boundary in inference output
inline constexpr TokenId kFirstContent = 10;

inline constexpr bool is_structural(TokenId id) { return id >= 0 && id < kFirstContent; }
inline constexpr bool is_field_marker(TokenId id) {
  return id == kUserField || id == kResponseField || id == kKnowledgeField;
}
inline constexpr bool is_segment_boundary(TokenId id) {
  return id == kEndOfAct || id == kEndOfKnowledge;
}
}  // namespace tok

}  // namespace krtod
