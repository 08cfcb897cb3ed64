#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "krtod/types.hpp"
#include "krtod/vocabulary.hpp"

namespace krtod {

struct SlotValue {
  std::string entity;
  std::string slot;
  std::string value;
  std::size_t kb_index = 0;
  Tokens tokens;  // encoded "entity slot value"

  bool operator==(const SlotValue&) const = default;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  // Appends an entry; assigns kb_index and rejects duplicate (entity, slot).
  const SlotValue& add(std::string entity, std::string slot, std::string value,
                       const Vocabulary& vocab);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const SlotValue& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<SlotValue>& entries() const { return entries_; }

  bool operator==(const KnowledgeBase&) const = default;

 private:
  std::vector<SlotValue> entries_;
};

struct Turn {
  Tokens user;
  Tokens response;
  std::optional<KbMask> gold_xi;
  std::optional<Tokens> gold_act;  // without the trailing EOS

  bool labeled() const { return gold_xi.has_value(); }
  bool operator==(const Turn&) const = default;
};

struct Dialog {
  std::string id;
  KnowledgeBase kb;
  std::vector<Turn> turns;
  bool labeled = false;

  bool operator==(const Dialog&) const = default;
};

struct Corpus {
  std::vector<Dialog> dialogs;
  Vocabulary vocab;

  std::size_t turn_count() const;
  bool operator==(const Corpus&) const = default;
};

// Checks the structural invariants (label pairing, mask lengths, nonempty
// responses, token ids in range). Throws ShapeError / DomainError.
void validate(const Dialog& dialog, const Vocabulary& vocab);
void validate(const Corpus& corpus);

// u_1 SEP r_1 SEP ... u_{t-1} SEP r_{t-1} SEP, with t 1-based. Empty for t = 1.
Tokens build_context(const Dialog& dialog, std::size_t t);

// Canonical rendering: selected entries in kb order, each followed by SEP;
// the empty selection renders as the single NULL token.
Tokens serialize_xi(const KbMask& mask, const KnowledgeBase& kb);

// Inverse of serialize_xi. Throws ParseError when the tokens are not the
// canonical rendering of some subset of kb.
KbMask parse_xi(TokenSpan tokens, const KnowledgeBase& kb);

KbMask indices_to_mask(const std::vector<std::size_t>& indices, std::size_t n);
std::vector<std::size_t> mask_to_indices(const KbMask& mask);

}  // namespace krtod
