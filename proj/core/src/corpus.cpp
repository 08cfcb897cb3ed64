#include "krtod/corpus.hpp"

#include <algorithm>
#include <string>

#include "krtod/errors.hpp"

namespace krtod {

const SlotValue& KnowledgeBase::add(std::string entity, std::string slot, std::string value,
                                    const Vocabulary& vocab) {
  for (const auto& e : entries_) {
    if (e.entity == entity && e.slot == slot)
      throw ShapeError("duplicate (entity, slot) in knowledge base: " + entity + " " + slot);
  }
  SlotValue sv;
  sv.tokens = vocab.encode(entity + " " + slot + " " + value);
  if (std::any_of(sv.tokens.begin(), sv.tokens.end(), tok::is_structural))
    throw DomainError("knowledge entry uses a reserved token: " + entity + " " + slot + " " + value);
  for (const auto& e : entries_) {
    if (e.tokens == sv.tokens)
      throw ShapeError("knowledge entries render identically: " + vocab.decode(sv.tokens));
  }
  sv.entity = std::move(entity);
  sv.slot = std::move(slot);
  sv.value = std::move(value);
  sv.kb_index = entries_.size();
  entries_.push_back(std::move(sv));
  return entries_.back();
}

std::size_t Corpus::turn_count() const {
  std::size_t n = 0;
  for (const auto& d : dialogs) n += d.turns.size();
  return n;
}

namespace {

void check_ids(TokenSpan ids, const Vocabulary& vocab, const std::string& where) {
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
      throw DomainError(where + ": token id " + std::to_string(id) + " out of vocabulary");
  }
}

}  // namespace

void validate(const Dialog& dialog, const Vocabulary& vocab) {
  const std::string where = "dialog " + dialog.id;
  if (dialog.turns.empty()) throw ShapeError(where + ": no turns");
  for (std::size_t i = 0; i < dialog.kb.size(); ++i) {
    if (dialog.kb[i].kb_index != i) throw ShapeError(where + ": kb_index mismatch");
    check_ids(dialog.kb[i].tokens, vocab, where);
  }
  for (std::size_t t = 0; t < dialog.turns.size(); ++t) {
    const auto& turn = dialog.turns[t];
    const std::string at = where + " turn " + std::to_string(t + 1);
    if (turn.response.empty()) throw ShapeError(at + ": empty response");
    if (turn.gold_xi.has_value() != turn.gold_act.has_value())
      throw ShapeError(at + ": xi and act must be both present or both absent");
    if (turn.gold_xi && turn.gold_xi->size() != dialog.kb.size())
      throw ShapeError(at + ": xi mask length differs from knowledge base size");
    if (turn.labeled() != dialog.labeled)
      throw ShapeError(at + ": label presence disagrees with the dialog's labeled flag");
    check_ids(turn.user, vocab, at);
    check_ids(turn.response, vocab, at);
    if (turn.gold_act) check_ids(*turn.gold_act, vocab, at);
  }
}

void validate(const Corpus& corpus) {
  for (const auto& d : corpus.dialogs) validate(d, corpus.vocab);
}

Tokens build_context(const Dialog& dialog, std::size_t t) {
  if (t < 1 || t > dialog.turns.size())
    throw RangeError("turn index " + std::to_string(t) + " outside 1.." +
                     std::to_string(dialog.turns.size()));
  Tokens ctx;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const auto& turn = dialog.turns[i];
    ctx.insert(ctx.end(), turn.user.begin(), turn.user.end());
    ctx.push_back(tok::kSep);
    ctx.insert(ctx.end(), turn.response.begin(), turn.response.end());
    ctx.push_back(tok::kSep);
  }
  return ctx;
}

Tokens serialize_xi(const KbMask& mask, const KnowledgeBase& kb) {
  if (mask.size() != kb.size())
    throw ShapeError("mask length " + std::to_string(mask.size()) + " differs from knowledge base size " +
                     std::to_string(kb.size()));
  Tokens out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    out.insert(out.end(), kb[i].tokens.begin(), kb[i].tokens.end());
    out.push_back(tok::kSep);
  }
  if (out.empty()) out.push_back(tok::kNull);
  return out;
}

KbMask parse_xi(TokenSpan tokens, const KnowledgeBase& kb) {
  KbMask mask(kb.size(), 0);
  if (tokens.size() == 1 && tokens[0] == tok::kNull) return mask;
  if (tokens.empty()) throw ParseError("empty knowledge segment");
  std::size_t pos = 0;
  std::size_t next_entry = 0;
  while (pos < tokens.size()) {
    auto sep = std::find(tokens.begin() + static_cast<std::ptrdiff_t>(pos), tokens.end(), tok::kSep);
    if (sep == tokens.end()) throw ParseError("knowledge segment is not SEP-terminated");
    const auto end = static_cast<std::size_t>(sep - tokens.begin());
    const auto piece = tokens.subspan(pos, end - pos);
    bool found = false;
    for (std::size_t i = next_entry; i < kb.size(); ++i) {
      if (std::equal(piece.begin(), piece.end(), kb[i].tokens.begin(), kb[i].tokens.end())) {
        mask[i] = 1;
        next_entry = i + 1;
        found = true;
        break;
      }
    }
    if (!found) throw ParseError("segment does not name a knowledge entry in canonical order");
    pos = end + 1;
  }
  return mask;
}

KbMask indices_to_mask(const std::vector<std::size_t>& indices, std::size_t n) {
  KbMask mask(n, 0);
  for (auto i : indices) {
    if (i >= n) throw RangeError("knowledge index " + std::to_string(i) + " outside 0.." + std::to_string(n));
    if (mask[i]) throw ShapeError("duplicate knowledge index " + std::to_string(i));
    mask[i] = 1;
  }
  return mask;
}

std::vector<std::size_t> mask_to_indices(const KbMask& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

}  // namespace krtod
