#pragma once

#include <functional>
#include <map>
#include <unordered_map>
#include <vector>

#include "krtod/corpus.hpp"
#include "krtod/features.hpp"
#include "krtod/types.hpp"

namespace krtod {

class RetrieverGradient {
 public:
  bool empty() const { return weights_.empty() && table_.empty() && !bias_touched_; }
  void clear();
  void scale(double s);

 private:
  friend class Retriever;
  std::map<std::uint32_t, double> weights_;
  std::map<Tokens, double> table_;
  double bias_ = 0.0;
  bool bias_touched_ = false;
};

// Per-entry relevance head p(sv | c, u) = sigmoid(w . x + b).
//
// hashed: x = encode_retrieval(c, u, sv), w has `dim` entries.
// tabular: w . x is a single weight looked up by the last `order` tokens of
//   c ++ u (PAD-padded) joined with the entry tokens; missing keys weigh 0.
class Retriever {
 public:
  Retriever() = default;
  explicit Retriever(EncoderConfig encoder);

  const EncoderConfig& encoder() const { return encoder_; }

  double logit(TokenSpan context, TokenSpan user, TokenSpan entry) const;
  double prob(TokenSpan context, TokenSpan user, TokenSpan entry) const;

  // Sum over entries of log p_i (selected) or log(1 - p_i) (not selected).
  double xi_log_prob(TokenSpan context, TokenSpan user, const KbMask& mask, const KnowledgeBase& kb) const;

  // Adds scale * gradient of xi_log_prob into grad; returns xi_log_prob.
  double accumulate_gradient(TokenSpan context, TokenSpan user, const KbMask& mask, const KnowledgeBase& kb,
                             double scale, RetrieverGradient& grad) const;

  // mask_i = 1 iff prob_i >= threshold.
  KbMask retrieve(TokenSpan context, TokenSpan user, const KnowledgeBase& kb, double threshold) const;

  void apply(RetrieverGradient& grad, double lr);
  void visit(const RetrieverGradient& grad, const std::function<void(double&, double)>& fn);

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::map<Tokens, double>& table() { return table_; }
  const std::map<Tokens, double>& table() const { return table_; }
  double& bias() { return bias_; }
  double bias() const { return bias_; }

  bool operator==(const Retriever&) const = default;

 private:
  Tokens table_key(TokenSpan context, TokenSpan user, TokenSpan entry) const;

  EncoderConfig encoder_;
  std::vector<double> weights_;
  std::map<Tokens, double> table_;
  double bias_ = 0.0;
};

}  // namespace krtod
