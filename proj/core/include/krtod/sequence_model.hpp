#pragma once

#include <functional>
#include <map>
#include <vector>

#include "krtod/features.hpp"
#include "krtod/types.hpp"

namespace krtod {

// Sparse-by-row gradient buffer of a SequenceModel. Accumulation is additive,
// so a batch average is just accumulation with scale 1/B.
class SequenceGradient {
 public:
  bool empty() const { return rows_.empty() && table_.empty() && copy_.empty(); }
  void clear();
  void scale(double s);

 private:
  friend class SequenceModel;
  friend class StepState;
  double* dense_row(std::uint32_t row, std::size_t dim, std::size_t vocab);
  std::vector<double>& table_row(const Tokens& key, std::size_t vocab);
  double* copy_row(std::size_t size);

  std::vector<double> dense_;
  std::vector<std::uint32_t> rows_;
  std::vector<std::uint8_t> touched_;
  std::size_t vocab_ = 0;
  std::map<Tokens, std::vector<double>> table_;
  std::vector<double> copy_;
};

// Autoregressive model p(y_1..y_L | condition) = prod_l softmax(z_l)[y_l].
//
// tabular: z_l is a row of log-weights keyed on the last `order` tokens of
//   condition ++ y_<l (left-padded with PAD); missing rows are all zeros.
// hashed: z_l = W^T x_l with W a dim x |V| matrix and x_l the sum of
//   - mean-pooled field-tagged n-grams of the condition (constant over l),
//   - per-step indicators: segment bias, last token, last bigram,
//   - pointer features: the tokens at offsets 0..4 from an alignment cursor
//     into the source field (the condition's last field). The cursor moves
//     past each emitted token found ahead of it and resets at <eoa>/<eok>.
//   With encoder.copy, z_l[v] also gains copy[seg, aligned, o] for every
//   pointer offset o whose source token is v.
class SequenceModel {
 public:
  static constexpr std::size_t kPointerOffsets = 5;
  static constexpr std::size_t kSegments = 4;
  static constexpr std::size_t kCopyWeights = kSegments * 2 * kPointerOffsets;

  SequenceModel() = default;
  SequenceModel(EncoderConfig encoder, std::size_t vocab_size);

  const EncoderConfig& encoder() const { return encoder_; }
  std::size_t vocab_size() const { return vocab_; }

  // Sum of next-token log-probabilities; the target must end with EOS.
  double log_prob(TokenSpan condition, TokenSpan target) const;

  // Adds scale * d log_prob / d params into grad and returns log_prob.
  double accumulate_gradient(TokenSpan condition, TokenSpan target, double scale, SequenceGradient& grad) const;

  // Ancestral sampling until EOS (inclusive) or max_len tokens.
  Tokens sample(TokenSpan condition, Rng& rng, std::size_t max_len) const;

  // Argmax per step, ties to the lowest id; stops at EOS or max_len.
  Tokens greedy(TokenSpan condition, std::size_t max_len) const;

  // Log-softmax of the next-token distribution after `prefix`.
  std::vector<double> next_log_probs(TokenSpan condition, TokenSpan prefix) const;

  // params += lr * grad, then grad is cleared. Throws NumericError (leaving
  // params untouched) if the buffer holds a non-finite entry.
  void apply(SequenceGradient& grad, double lr);

  // Calls fn(param, gradient) for every parameter present in grad, creating
  // zero tabular rows when needed. Used by gradient checks.
  void visit(const SequenceGradient& grad, const std::function<void(double&, double)>& fn);

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& copy_weights() { return copy_; }
  const std::vector<double>& copy_weights() const { return copy_; }
  std::map<Tokens, std::vector<double>>& table() { return table_; }
  const std::map<Tokens, std::vector<double>>& table() const { return table_; }

  bool operator==(const SequenceModel&) const = default;

 private:
  friend class StepState;
  void check_tokens(TokenSpan seq, const char* what) const;

  EncoderConfig encoder_;
  std::size_t vocab_ = 0;
  std::vector<double> weights_;
  std::map<Tokens, std::vector<double>> table_;
  std::vector<double> copy_;
};

}  // namespace krtod
