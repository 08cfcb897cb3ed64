#include "krtod/features.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"

namespace krtod {

std::string to_string(Backend b) { return b == Backend::kTabular ? "tabular" : "hashed"; }

Backend backend_from_string(const std::string& s) {
  if (s == "tabular") return Backend::kTabular;
  if (s == "hashed") return Backend::kHashed;
  throw ConfigError("unknown backend '" + s + "' (expected tabular or hashed)");
}

std::vector<int> field_ids(TokenSpan condition) {
  std::vector<int> ids(condition.size());
  int field = 0;
  for (std::size_t i = 0; i < condition.size(); ++i) {
    switch (condition[i]) {
      case tok::kUserField: field = 1; ids[i] = -1; continue;
      case tok::kResponseField: field = 2; ids[i] = -1; continue;
      case tok::kKnowledgeField: field = 3; ids[i] = -1; continue;
      default: ids[i] = field;
    }
  }
  return ids;
}

std::size_t source_field_begin(TokenSpan condition) {
  for (std::size_t i = condition.size(); i > 0; --i)
    if (tok::is_field_marker(condition[i - 1])) return i;
  return 0;
}

namespace {

std::uint64_t key(const EncoderConfig& cfg, FeatureKind kind, std::initializer_list<std::uint64_t> parts) {
  return hash_values(hash_combine(cfg.hash_seed, static_cast<std::uint64_t>(kind)), parts);
}

std::uint64_t u64(TokenId t) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(t)); }

void ngrams(const EncoderConfig& cfg, TokenSpan seq, const std::vector<int>& fields, FeatureVector& out) {
  std::size_t begin = out.size();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (fields[i] < 0) continue;
    const auto f = static_cast<std::uint64_t>(fields[i]);
    out.push_back(hashed_feature(key(cfg, FeatureKind::kUnigram, {f, u64(seq[i])}), cfg.dim, 1.0));
    if (i + 1 < seq.size() && fields[i + 1] == fields[i])
      out.push_back(
          hashed_feature(key(cfg, FeatureKind::kBigram, {f, u64(seq[i]), u64(seq[i + 1])}), cfg.dim, 1.0));
  }
  const std::size_t n = out.size() - begin;
  if (n == 0) return;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = begin; i < out.size(); ++i) out[i].value *= inv;
}

}  // namespace

void append_ngram_features(const EncoderConfig& cfg, TokenSpan condition, FeatureVector& out) {
  ngrams(cfg, condition, field_ids(condition), out);
}

FeatureVector encode_retrieval(const EncoderConfig& cfg, TokenSpan context, TokenSpan user, TokenSpan entry) {
  Tokens joined;
  std::vector<int> fields;
  joined.reserve(context.size() + user.size() + entry.size());
  auto put = [&](TokenSpan s, int f) {
    for (auto t : s) {
      joined.push_back(t);
      fields.push_back(f);
    }
  };
  put(context, 0);
  put(user, 1);
  put(entry, 2);

  FeatureVector out;
  ngrams(cfg, joined, fields, out);

  constexpr std::size_t kMaxPositions = 8;
  constexpr int kMaxOffset = 6;
  const std::size_t n = std::min(entry.size(), kMaxPositions);
  std::vector<std::vector<int>> where(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < user.size(); ++i)
      if (user[i] == entry[j]) where[j].push_back(static_cast<int>(i));
    if (!where[j].empty())
      out.push_back(hashed_feature(key(cfg, FeatureKind::kMatchUser, {j}), cfg.dim, 1.0));
    if (std::find(context.begin(), context.end(), entry[j]) != context.end())
      out.push_back(hashed_feature(key(cfg, FeatureKind::kMatchContext, {j}), cfg.dim, 1.0));
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (where[a].empty() || where[b].empty()) continue;
      int best = std::numeric_limits<int>::max();
      for (int pa : where[a])
        for (int pb : where[b])
          if (std::abs(pb - pa) < std::abs(best)) best = pb - pa;
      best = std::clamp(best, -kMaxOffset, kMaxOffset);
      out.push_back(hashed_feature(
          key(cfg, FeatureKind::kPairOffset, {a, b, static_cast<std::uint64_t>(best + kMaxOffset)}), cfg.dim,
          1.0));
    }
  }
  return out;
}

}  // namespace krtod
