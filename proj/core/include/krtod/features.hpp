#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "krtod/types.hpp"

namespace krtod {

enum class Backend { kTabular, kHashed };

std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);  // throws ConfigError

// Configuration of the input encoder shared by the three models.
//  tabular: distributions keyed on the last `order` tokens of the history
//  hashed:  signed feature hashing into `dim` buckets with linear heads
struct EncoderConfig {
  Backend backend = Backend::kHashed;
  std::size_t order = 2;
  std::size_t dim = 4096;
  std::uint64_t hash_seed = 0x6b72746f64ULL;
  // Hashed sequence models only: scalar weights that raise the logit of the
  // source token found at each pointer offset, independent of its identity.
  bool copy = false;

  bool operator==(const EncoderConfig&) const = default;
};

struct HashedFeature {
  std::uint32_t index;
  double value;  // carries the hash sign
};

using FeatureVector = std::vector<HashedFeature>;

// Feature families; part of the hash so families never share a key.
enum class FeatureKind : std::uint64_t {
  kUnigram = 1,
  kBigram,
  kMatchUser,
  kMatchContext,
  kPairOffset,
  kBias,
  kLast1,
  kLast2,
  kPointer,
};

inline HashedFeature hashed_feature(std::uint64_t h, std::size_t dim, double value) {
  const double sign = (h >> 63) ? -1.0 : 1.0;
  return {static_cast<std::uint32_t>(h % dim), sign * value};
}

// Field of every condition token: 0 before the first marker, then 1/2/3 after
// <u>/<r>/<kb>. Marker positions get -1.
std::vector<int> field_ids(TokenSpan condition);

// Start offset of the last field (the tokens after the final marker); 0 when
// the condition holds no marker.
std::size_t source_field_begin(TokenSpan condition);

// Mean-pooled field-tagged unigram and bigram features of a condition.
void append_ngram_features(const EncoderConfig& cfg, TokenSpan condition, FeatureVector& out);

// Feature vector of the retriever input (context, user utterance, one entry):
// mean-pooled n-grams of the three fields, exact-match indicators of each
// entry position in the user turn and in the context, and the signed offset
// between matched entry tokens inside the user turn.
FeatureVector encode_retrieval(const EncoderConfig& cfg, TokenSpan context, TokenSpan user, TokenSpan entry);

}  // namespace krtod
