#include "krtod/sequence_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"
#include "krtod/numeric.hpp"

namespace krtod {

void SequenceGradient::clear() {
  for (auto r : rows_) {
    std::fill_n(dense_.begin() + static_cast<std::ptrdiff_t>(r * vocab_), vocab_, 0.0);
    touched_[r] = 0;
  }
  rows_.clear();
  table_.clear();
  copy_.clear();
}

void SequenceGradient::scale(double s) {
  for (auto r : rows_)
    for (std::size_t v = 0; v < vocab_; ++v) dense_[r * vocab_ + v] *= s;
  for (auto& [k, row] : table_)
    for (auto& g : row) g *= s;
  for (auto& g : copy_) g *= s;
}

double* SequenceGradient::dense_row(std::uint32_t row, std::size_t dim, std::size_t vocab) {
  if (dense_.size() != dim * vocab) {
    dense_.assign(dim * vocab, 0.0);
    touched_.assign(dim, 0);
    rows_.clear();
    vocab_ = vocab;
  }
  if (!touched_[row]) {
    touched_[row] = 1;
    rows_.push_back(row);
  }
  return dense_.data() + static_cast<std::size_t>(row) * vocab;
}

double* SequenceGradient::copy_row(std::size_t size) {
  if (copy_.size() != size) copy_.assign(size, 0.0);
  return copy_.data();
}

std::vector<double>& SequenceGradient::table_row(const Tokens& key, std::size_t vocab) {
  auto& row = table_[key];
  if (row.empty()) row.assign(vocab, 0.0);
  return row;
}

// Incremental decoding state bound to one condition.
class StepState {
 public:
  StepState(const SequenceModel& model, TokenSpan condition) : model_(model) {
    if (model.encoder_.backend == Backend::kHashed) {
      source_ = condition.subspan(source_field_begin(condition));
      append_ngram_features(model.encoder_, condition, cond_features_);
      cond_logits_.assign(model.vocab_, 0.0);
      for (const auto& f : cond_features_) add_row(f, cond_logits_);
    } else {
      history_.assign(condition.begin(), condition.end());
    }
  }

  void logits(std::vector<double>& z) {
    const auto V = model_.vocab_;
    if (model_.encoder_.backend == Backend::kHashed) {
      z = cond_logits_;
      step_features();
      for (const auto& f : step_features_) add_row(f, z);
      if (model_.encoder_.copy) {
        for (std::size_t o = 0; o < SequenceModel::kPointerOffsets; ++o) {
          const TokenId t = source_at(o);
          if (t >= 0) z[static_cast<std::size_t>(t)] += model_.copy_[copy_index(o)];
        }
      }
    } else {
      make_key();
      auto it = model_.table_.find(key_);
      if (it == model_.table_.end()) z.assign(V, 0.0);
      else z = it->second;
    }
  }

  // Gradient of log p(y | state) given the softmax probabilities of the
  // current step. Hashed condition contributions are deferred to finish().
  void accumulate(TokenId y, const std::vector<double>& probs, double scale, SequenceGradient& grad) {
    const auto V = model_.vocab_;
    if (model_.encoder_.backend == Backend::kHashed) {
      if (cond_grad_.empty()) cond_grad_.assign(V, 0.0);
      for (std::size_t v = 0; v < V; ++v) cond_grad_[v] -= probs[v];
      cond_grad_[static_cast<std::size_t>(y)] += 1.0;
      for (const auto& f : step_features_) {
        double* row = grad.dense_row(f.index, model_.encoder_.dim, V);
        const double c = scale * f.value;
        for (std::size_t v = 0; v < V; ++v) row[v] -= c * probs[v];
        row[static_cast<std::size_t>(y)] += c;
      }
      if (model_.encoder_.copy) {
        double* g = grad.copy_row(SequenceModel::kCopyWeights);
        for (std::size_t o = 0; o < SequenceModel::kPointerOffsets; ++o) {
          const TokenId t = source_at(o);
          if (t >= 0) g[copy_index(o)] += scale * ((t == y ? 1.0 : 0.0) - probs[static_cast<std::size_t>(t)]);
        }
      }
    } else {
      auto& row = grad.table_row(key_, V);
      for (std::size_t v = 0; v < V; ++v) row[v] -= scale * probs[v];
      row[static_cast<std::size_t>(y)] += scale;
    }
  }

  void finish(double scale, SequenceGradient& grad) {
    if (model_.encoder_.backend != Backend::kHashed || cond_grad_.empty()) return;
    const auto V = model_.vocab_;
    for (const auto& f : cond_features_) {
      double* row = grad.dense_row(f.index, model_.encoder_.dim, V);
      const double c = scale * f.value;
      for (std::size_t v = 0; v < V; ++v) row[v] += c * cond_grad_[v];
    }
    cond_grad_.clear();
  }

  void push(TokenId y) {
    if (model_.encoder_.backend == Backend::kTabular) {
      history_.push_back(y);
      return;
    }
    if (tok::is_segment_boundary(y)) {
      ++segment_;
      cursor_ = 0;
      aligned_ = false;
    } else {
      auto it = std::find(source_.begin() + static_cast<std::ptrdiff_t>(std::min(cursor_, source_.size())),
                          source_.end(), y);
      if (it != source_.end()) {
        cursor_ = static_cast<std::size_t>(it - source_.begin()) + 1;
        aligned_ = true;
      } else {
        aligned_ = false;
      }
    }
    last2_ = last_;
    last_ = y;
  }

 private:
  static std::uint64_t u64(TokenId t) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(t)); }

  void add_row(const HashedFeature& f, std::vector<double>& z) const {
    const auto V = model_.vocab_;
    const double* row = model_.weights_.data() + static_cast<std::size_t>(f.index) * V;
    for (std::size_t v = 0; v < V; ++v) z[v] += f.value * row[v];
  }

  std::uint64_t key(FeatureKind kind, std::initializer_list<std::uint64_t> parts) const {
    return hash_values(hash_combine(model_.encoder_.hash_seed, static_cast<std::uint64_t>(kind)), parts);
  }

  // Source token at pointer offset o, or -1 past the end.
  TokenId source_at(std::size_t o) const {
    const std::size_t p = cursor_ + o;
    return p < source_.size() ? source_[p] : TokenId{-1};
  }

  std::size_t copy_index(std::size_t o) const {
    const auto seg = static_cast<std::size_t>(std::min<int>(segment_, SequenceModel::kSegments - 1));
    return (seg * 2 + (aligned_ ? 1 : 0)) * SequenceModel::kPointerOffsets + o;
  }

  void step_features() {
    const auto dim = model_.encoder_.dim;
    const std::uint64_t seg = static_cast<std::uint64_t>(std::min<int>(segment_, SequenceModel::kSegments - 1));
    step_features_.clear();
    step_features_.push_back(hashed_feature(key(FeatureKind::kBias, {seg}), dim, 1.0));
    step_features_.push_back(hashed_feature(key(FeatureKind::kLast1, {seg, u64(last_)}), dim, 1.0));
    step_features_.push_back(hashed_feature(key(FeatureKind::kLast2, {seg, u64(last2_), u64(last_)}), dim, 1.0));
    const std::uint64_t al = aligned_ ? 1 : 0;
    for (std::size_t o = 0; o < SequenceModel::kPointerOffsets; ++o) {
      const TokenId t = source_at(o);
      step_features_.push_back(hashed_feature(key(FeatureKind::kPointer, {seg, al, o, u64(t)}), dim, 1.0));
    }
  }

  void make_key() {
    const auto k = model_.encoder_.order;
    key_.assign(k, tok::kPad);
    const std::size_t n = std::min(k, history_.size());
    std::copy(history_.end() - static_cast<std::ptrdiff_t>(n), history_.end(),
              key_.begin() + static_cast<std::ptrdiff_t>(k - n));
  }

  const SequenceModel& model_;
  // hashed
  TokenSpan source_;
  FeatureVector cond_features_;
  std::vector<double> cond_logits_;
  FeatureVector step_features_;
  std::vector<double> cond_grad_;
  int segment_ = 0;
  std::size_t cursor_ = 0;
  bool aligned_ = false;
  TokenId last_ = tok::kBos;
  TokenId last2_ = tok::kBos;
  // tabular
  Tokens history_;
  Tokens key_;
};

namespace {

// In-place log-softmax; returns nothing, z becomes log-probabilities.
void log_softmax(std::vector<double>& z) {
  const double lse = log_sum_exp(z);
  for (auto& x : z) x -= lse;
}

}  // namespace

SequenceModel::SequenceModel(EncoderConfig encoder, std::size_t vocab_size)
    : encoder_(encoder), vocab_(vocab_size) {
  if (vocab_ == 0) throw ConfigError("sequence model needs a nonempty vocabulary");
  if (encoder_.backend == Backend::kHashed) {
    if (encoder_.dim == 0) throw ConfigError("hashed encoder needs dim > 0");
    weights_.assign(encoder_.dim * vocab_, 0.0);
    if (encoder_.copy) copy_.assign(kCopyWeights, 0.0);
  } else if (encoder_.order == 0) {
    throw ConfigError("tabular encoder needs order >= 1");
  }
}

void SequenceModel::check_tokens(TokenSpan seq, const char* what) const {
  for (auto t : seq) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_)
      throw DomainError(std::string(what) + " token id " + std::to_string(t) + " out of vocabulary of size " +
                        std::to_string(vocab_));
  }
}

double SequenceModel::log_prob(TokenSpan condition, TokenSpan target) const {
  check_tokens(condition, "condition");
  check_tokens(target, "target");
  if (target.empty() || target.back() != tok::kEos) throw DomainError("target must end with EOS");
  StepState state(*this, condition);
  std::vector<double> z;
  double total = 0.0;
  for (auto y : target) {
    state.logits(z);
    total += z[static_cast<std::size_t>(y)] - log_sum_exp(z);
    state.push(y);
  }
  return total;
}

double SequenceModel::accumulate_gradient(TokenSpan condition, TokenSpan target, double scale,
                                          SequenceGradient& grad) const {
  check_tokens(condition, "condition");
  check_tokens(target, "target");
  if (target.empty() || target.back() != tok::kEos) throw DomainError("target must end with EOS");
  StepState state(*this, condition);
  std::vector<double> z;
  double total = 0.0;
  for (auto y : target) {
    state.logits(z);
    log_softmax(z);
    total += z[static_cast<std::size_t>(y)];
    for (auto& x : z) x = std::exp(x);
    state.accumulate(y, z, scale, grad);
    state.push(y);
  }
  state.finish(scale, grad);
  return total;
}

Tokens SequenceModel::sample(TokenSpan condition, Rng& rng, std::size_t max_len) const {
  check_tokens(condition, "condition");
  StepState state(*this, condition);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> z;
  Tokens out;
  while (out.size() < max_len) {
    state.logits(z);
    log_softmax(z);
    const double u = unif(rng);
    double cum = 0.0;
    TokenId pick = -1;
    for (std::size_t v = 0; v < vocab_; ++v) {
      cum += std::exp(z[v]);
      if (u < cum) {
        pick = static_cast<TokenId>(v);
        break;
      }
    }
    if (pick < 0) {
      // u landed in the rounding gap above the cumulative sum; take the last
      // token with nonzero mass.
      for (std::size_t v = vocab_; v > 0; --v)
        if (std::exp(z[v - 1]) > 0.0) {
          pick = static_cast<TokenId>(v - 1);
          break;
        }
    }
    out.push_back(pick);
    if (pick == tok::kEos) break;
    state.push(pick);
  }
  return out;
}

Tokens SequenceModel::greedy(TokenSpan condition, std::size_t max_len) const {
  check_tokens(condition, "condition");
  StepState state(*this, condition);
  std::vector<double> z;
  Tokens out;
  while (out.size() < max_len) {
    state.logits(z);
    std::size_t best = 0;
    for (std::size_t v = 1; v < vocab_; ++v)
      if (z[v] > z[best]) best = v;
    const auto pick = static_cast<TokenId>(best);
    out.push_back(pick);
    if (pick == tok::kEos) break;
    state.push(pick);
  }
  return out;
}

std::vector<double> SequenceModel::next_log_probs(TokenSpan condition, TokenSpan prefix) const {
  check_tokens(condition, "condition");
  check_tokens(prefix, "prefix");
  StepState state(*this, condition);
  for (auto y : prefix) {
    std::vector<double> unused;
    state.logits(unused);
    state.push(y);
  }
  std::vector<double> z;
  state.logits(z);
  log_softmax(z);
  return z;
}

void SequenceModel::apply(SequenceGradient& grad, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw NumericError("learning rate must be finite and non-negative");
  for (auto r : grad.rows_)
    for (std::size_t v = 0; v < vocab_; ++v)
      if (!std::isfinite(grad.dense_[r * vocab_ + v])) throw NumericError("non-finite gradient entry");
  for (const auto& [k, row] : grad.table_)
    for (double g : row)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient entry");
  for (double g : grad.copy_)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient entry");
  if (lr > 0.0) {
    for (std::size_t i = 0; i < grad.copy_.size(); ++i) copy_[i] += lr * grad.copy_[i];
    for (auto r : grad.rows_) {
      double* w = weights_.data() + static_cast<std::size_t>(r) * vocab_;
      const double* g = grad.dense_.data() + static_cast<std::size_t>(r) * vocab_;
      for (std::size_t v = 0; v < vocab_; ++v) w[v] += lr * g[v];
    }
    for (const auto& [k, row] : grad.table_) {
      auto& w = table_[k];
      if (w.empty()) w.assign(vocab_, 0.0);
      for (std::size_t v = 0; v < vocab_; ++v) w[v] += lr * row[v];
    }
  }
  grad.clear();
}

void SequenceModel::visit(const SequenceGradient& grad, const std::function<void(double&, double)>& fn) {
  for (auto r : grad.rows_)
    for (std::size_t v = 0; v < vocab_; ++v) fn(weights_[r * vocab_ + v], grad.dense_[r * vocab_ + v]);
  for (const auto& [k, row] : grad.table_) {
    auto& w = table_[k];
    if (w.empty()) w.assign(vocab_, 0.0);
    for (std::size_t v = 0; v < vocab_; ++v) fn(w[v], row[v]);
  }
  for (std::size_t i = 0; i < grad.copy_.size(); ++i) fn(copy_[i], grad.copy_[i]);
}

}  // namespace krtod
