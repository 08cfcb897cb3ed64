#include "krtod/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "krtod/errors.hpp"
#include "krtod/numeric.hpp"

namespace krtod {

std::size_t latent_space_size(std::size_t kb_size, std::size_t content_tokens, std::size_t max_act_len) {
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  if (kb_size >= 63) return kMax;
  std::size_t acts = 0;
  std::size_t power = 1;
  for (std::size_t l = 1; l <= max_act_len; ++l) {
    if (content_tokens != 0 && power > kMax / content_tokens) return kMax;
    power *= content_tokens;
    if (acts > kMax - power) return kMax;
    acts += power;
  }
  const std::size_t masks = std::size_t{1} << kb_size;
  if (acts != 0 && masks > kMax / acts) return kMax;
  return masks * acts;
}

std::vector<LatentState> enumerate_latents(const KnowledgeBase& kb, const Vocabulary& vocab,
                                           std::size_t max_act_len) {
  const std::size_t n = kb.size();
  const std::size_t content = vocab.size() > tok::kFirstContent ? vocab.size() - tok::kFirstContent : 0;
  const std::size_t total = latent_space_size(n, content, max_act_len);
  if (total > kMaxEnumeratedStates)
    throw SizeError("latent space of " + (total == std::numeric_limits<std::size_t>::max()
                                              ? std::string("astronomical")
                                              : std::to_string(total)) +
                    " states exceeds the enumeration guard");

  std::vector<Tokens> acts;
  for (std::size_t len = 1; len <= max_act_len; ++len) {
    std::vector<std::size_t> digits(len, 0);
    while (true) {
      Tokens act(len + 1, tok::kEos);
      for (std::size_t i = 0; i < len; ++i) act[i] = static_cast<TokenId>(tok::kFirstContent + digits[i]);
      acts.push_back(std::move(act));
      std::size_t i = len;
      while (i > 0 && ++digits[i - 1] == content) digits[--i] = 0;
      if (i == 0) break;
    }
  }

  std::vector<LatentState> out;
  out.reserve(total);
  for (std::size_t m = 0; m < (std::size_t{1} << n); ++m) {
    KbMask mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = (m >> i) & 1U;
    for (const auto& a : acts) out.push_back({mask, a});
  }
  return out;
}

namespace {

std::vector<double> log_joints(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                               const KnowledgeBase& kb, const std::vector<LatentState>& states) {
  std::vector<double> lj;
  lj.reserve(states.size());
  for (const auto& h : states) lj.push_back(joint_log_prob(theta, context, user, response, kb, h));
  return lj;
}

}  // namespace

Posterior exact_posterior(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                          const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t max_act_len) {
  const auto states = enumerate_latents(kb, vocab, max_act_len);
  const auto lj = log_joints(theta, context, user, response, kb, states);
  const double z = log_sum_exp(lj);
  if (!std::isfinite(z)) throw DegenerateError("posterior has zero total mass");
  Posterior post;
  for (std::size_t i = 0; i < states.size(); ++i) post.emplace(states[i], std::exp(lj[i] - z));
  return post;
}

double exact_marginal(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                      const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t max_act_len) {
  const auto states = enumerate_latents(kb, vocab, max_act_len);
  const double z = log_sum_exp(log_joints(theta, context, user, response, kb, states));
  if (!std::isfinite(z)) throw DegenerateError("marginal likelihood is zero");
  return z;
}

double total_variation(const Posterior& p, const Posterior& q) {
  double tv = 0.0;
  for (const auto& [h, pv] : p) {
    auto it = q.find(h);
    tv += std::abs(pv - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [h, qv] : q)
    if (!p.contains(h)) tv += qv;
  return 0.5 * tv;
}

void fit_table(SequenceModel& model, TokenSpan condition, const std::vector<std::pair<Tokens, double>>& dist) {
  if (model.encoder().backend != Backend::kTabular) throw ConfigError("fit_table needs a tabular model");
  const std::size_t V = model.vocab_size();
  // Mass of every (prefix, next token) pair.
  std::map<Tokens, std::vector<double>> mass;
  for (const auto& [target, p] : dist) {
    if (target.empty() || target.back() != tok::kEos) throw DomainError("targets must end with EOS");
    if (condition.size() + target.size() > model.encoder().order)
      throw ConfigError("model order too small to key every prefix");
    Tokens prefix;
    for (auto y : target) {
      auto& row = mass[prefix];
      if (row.empty()) row.assign(V, 0.0);
      row[static_cast<std::size_t>(y)] += p;
      prefix.push_back(y);
    }
  }
  constexpr double kImpossible = -1e4;  // exp underflows to exactly zero after normalization
  const std::size_t k = model.encoder().order;
  for (const auto& [prefix, row] : mass) {
    Tokens history(condition.begin(), condition.end());
    history.insert(history.end(), prefix.begin(), prefix.end());
    Tokens key(k, tok::kPad);
    std::copy(history.begin(), history.end(), key.begin() + static_cast<std::ptrdiff_t>(k - history.size()));
    std::vector<double> logits(V, kImpossible);
    for (std::size_t v = 0; v < V; ++v)
      if (row[v] > 0.0) logits[v] = std::log(row[v]);
    model.table()[key] = std::move(logits);
  }
}

Phi proposal_from_posterior(const Posterior& target, TokenSpan context, TokenSpan user, TokenSpan response,
                            const KnowledgeBase& kb, std::size_t vocab_size, double invalid_mass) {
  if (!(invalid_mass >= 0.0 && invalid_mass < 1.0)) throw DomainError("invalid_mass must lie in [0, 1)");
  const Tokens cond = inference_condition(context, user, response);
  std::vector<std::pair<Tokens, double>> dist;
  std::size_t longest = 0;
  for (const auto& [h, p] : target) {
    dist.emplace_back(inference_target(serialize_xi(h.mask, kb), h.act), (1.0 - invalid_mass) * p);
    longest = std::max(longest, dist.back().first.size());
  }
  if (invalid_mass > 0.0) {
    // Two NULLs never parse as a knowledge selection.
    dist.push_back({{tok::kNull, tok::kNull, tok::kEndOfKnowledge, tok::kEos}, invalid_mass});
    longest = std::max<std::size_t>(longest, 4);
  }
  EncoderConfig enc;
  enc.backend = Backend::kTabular;
  enc.order = cond.size() + longest;
  Phi phi{SequenceModel(enc, vocab_size)};
  fit_table(phi.inference, cond, dist);
  return phi;
}

Posterior perturb_posterior(const Posterior& p, double mix, Rng& rng) {
  if (!(mix >= 0.0 && mix <= 1.0)) throw DomainError("mix must lie in [0, 1]");
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> r;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += r.emplace_back(expo(rng));
  Posterior out;
  std::size_t i = 0;
  for (const auto& [h, v] : p) out.emplace(h, (1.0 - mix) * v + mix * r[i++] / total);
  return out;
}

ChainRun run_turn_chain(const Theta& theta, const Phi& phi, const TurnView& turn, std::size_t steps, Rng& rng,
                        const SamplerConfig& config) {
  ChainRun run;
  run.steps = steps;
  std::optional<LatentState> current;
  std::map<LatentState, std::size_t> counts;
  for (std::size_t s = 0; s < steps; ++s) {
    mis_step(theta, phi, turn, current, rng, config, &run.stats);
    if (current) ++counts[*current];
  }
  for (const auto& [h, c] : counts) run.empirical.emplace(h, static_cast<double>(c) / static_cast<double>(steps));
  return run;
}

TinyInstance random_tiny_instance(std::uint64_t seed, std::size_t kb_size, std::size_t content_words,
                                  std::size_t max_act_len, double weight_scale) {
  if (content_words < 2) throw ConfigError("tiny instances need at least two content words");
  if (kb_size > content_words * content_words) throw ConfigError("too many kb entries for the word pool");
  Rng rng(seed);
  TinyInstance inst;
  inst.max_act_len = max_act_len;
  std::vector<std::string> words;
  for (std::size_t i = 0; i < content_words; ++i) {
    words.push_back("w" + std::to_string(i));
    inst.vocab.add(words.back());
  }
  std::uniform_int_distribution<std::size_t> pick(0, content_words - 1);
  // Distinct (entity, slot) pairs in a random order.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t e = 0; e < content_words; ++e)
    for (std::size_t s = 0; s < content_words; ++s) pairs.emplace_back(e, s);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  for (std::size_t i = 0; i < kb_size; ++i)
    inst.kb.add(words[pairs[i].first], words[pairs[i].second], words[pick(rng)], inst.vocab);

  auto random_seq = [&](std::size_t len) {
    Tokens s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(tok::kFirstContent + pick(rng)));
    return s;
  };
  inst.context = random_seq(2);
  inst.context.push_back(tok::kSep);
  inst.user = random_seq(2);
  inst.response = random_seq(2);

  ModelConfig cfg;
  cfg.retriever.dim = 32;
  cfg.generator.dim = 32;
  cfg.inference.dim = 32;
  cfg.retriever.hash_seed = seed ^ 0x51ULL;
  cfg.generator.hash_seed = seed ^ 0x52ULL;
  cfg.max_act_len = max_act_len;
  Model m(cfg, inst.vocab.size());
  std::normal_distribution<double> noise(0.0, weight_scale);
  for (auto& w : m.theta.retriever.weights()) w = noise(rng);
  m.theta.retriever.bias() = noise(rng);
  for (auto& w : m.theta.generator.weights()) w = noise(rng);
  inst.theta = std::move(m.theta);
  return inst;
}

}  // namespace krtod
