#include "krtod/retriever.hpp"

#include <cmath>

#include "krtod/errors.hpp"
#include "krtod/numeric.hpp"

namespace krtod {

void RetrieverGradient::clear() {
  weights_.clear();
  table_.clear();
  bias_ = 0.0;
  bias_touched_ = false;
}

void RetrieverGradient::scale(double s) {
  for (auto& [k, g] : weights_) g *= s;
  for (auto& [k, g] : table_) g *= s;
  bias_ *= s;
}

Retriever::Retriever(EncoderConfig encoder) : encoder_(encoder) {
  if (encoder_.backend == Backend::kHashed) {
    if (encoder_.dim == 0) throw ConfigError("hashed encoder needs dim > 0");
    weights_.assign(encoder_.dim, 0.0);
  } else if (encoder_.order == 0) {
    throw ConfigError("tabular encoder needs order >= 1");
  }
}

Tokens Retriever::table_key(TokenSpan context, TokenSpan user, TokenSpan entry) const {
  const std::size_t k = encoder_.order;
  Tokens key(k, tok::kPad);
  // Fill from the right with the tail of context ++ user.
  std::size_t pos = k;
  for (std::size_t i = user.size(); i > 0 && pos > 0; --i) key[--pos] = user[i - 1];
  for (std::size_t i = context.size(); i > 0 && pos > 0; --i) key[--pos] = context[i - 1];
  key.push_back(tok::kSep);
  key.insert(key.end(), entry.begin(), entry.end());
  return key;
}

double Retriever::logit(TokenSpan context, TokenSpan user, TokenSpan entry) const {
  if (encoder_.backend == Backend::kTabular) {
    auto it = table_.find(table_key(context, user, entry));
    return bias_ + (it == table_.end() ? 0.0 : it->second);
  }
  double z = bias_;
  for (const auto& f : encode_retrieval(encoder_, context, user, entry)) z += f.value * weights_[f.index];
  return z;
}

double Retriever::prob(TokenSpan context, TokenSpan user, TokenSpan entry) const {
  return sigmoid(logit(context, user, entry));
}

double Retriever::xi_log_prob(TokenSpan context, TokenSpan user, const KbMask& mask,
                              const KnowledgeBase& kb) const {
  if (mask.size() != kb.size())
    throw ShapeError("mask length " + std::to_string(mask.size()) + " != kb size " + std::to_string(kb.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const double z = logit(context, user, kb[i].tokens);
    total += mask[i] ? log_sigmoid(z) : log_sigmoid(-z);
  }
  return total;
}

double Retriever::accumulate_gradient(TokenSpan context, TokenSpan user, const KbMask& mask,
                                      const KnowledgeBase& kb, double scale, RetrieverGradient& grad) const {
  if (mask.size() != kb.size())
    throw ShapeError("mask length " + std::to_string(mask.size()) + " != kb size " + std::to_string(kb.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const TokenSpan entry = kb[i].tokens;
    const double z = logit(context, user, entry);
    const double y = mask[i] ? 1.0 : 0.0;
    total += mask[i] ? log_sigmoid(z) : log_sigmoid(-z);
    const double d = scale * (y - sigmoid(z));
    grad.bias_ += d;
    grad.bias_touched_ = true;
    if (encoder_.backend == Backend::kTabular) {
      grad.table_[table_key(context, user, entry)] += d;
    } else {
      for (const auto& f : encode_retrieval(encoder_, context, user, entry)) grad.weights_[f.index] += d * f.value;
    }
  }
  return total;
}

KbMask Retriever::retrieve(TokenSpan context, TokenSpan user, const KnowledgeBase& kb, double threshold) const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("retrieval threshold must lie in (0, 1)");
  KbMask mask(kb.size(), 0);
  for (std::size_t i = 0; i < kb.size(); ++i) mask[i] = prob(context, user, kb[i].tokens) >= threshold ? 1 : 0;
  return mask;
}

void Retriever::apply(RetrieverGradient& grad, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw NumericError("learning rate must be finite and non-negative");
  if (!std::isfinite(grad.bias_)) throw NumericError("non-finite gradient entry");
  for (const auto& [k, g] : grad.weights_)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient entry");
  for (const auto& [k, g] : grad.table_)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient entry");
  if (lr > 0.0) {
    for (const auto& [k, g] : grad.weights_) weights_[k] += lr * g;
    for (const auto& [k, g] : grad.table_) table_[k] += lr * g;
    bias_ += lr * grad.bias_;
  }
  grad.clear();
}

void Retriever::visit(const RetrieverGradient& grad, const std::function<void(double&, double)>& fn) {
  for (const auto& [k, g] : grad.weights_) fn(weights_[k], g);
  for (const auto& [k, g] : grad.table_) fn(table_[k], g);
  if (grad.bias_touched_) fn(bias_, grad.bias_);
}

}  // namespace krtod
