#pragma once

#include <map>
#include <utility>
#include <vector>

#include "krtod/model.hpp"
#include "krtod/sampler.hpp"

namespace krtod {

inline constexpr std::size_t kMaxEnumeratedStates = 1'000'000;

// All (mask, act) pairs: masks 0..2^N-1 (bit i = entry i) outer, acts by
// length then lexicographically over the content tokens inner. Throws
// SizeError when the space exceeds kMaxEnumeratedStates.
std::vector<LatentState> enumerate_latents(const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t max_act_len);

// Number of states enumerate_latents would produce, saturating at SIZE_MAX.
std::size_t latent_space_size(std::size_t kb_size, std::size_t content_tokens, std::size_t max_act_len);

using Posterior = std::map<LatentState, double>;

// p(h | c, u, r) proportional to p_ret(xi | c, u) p_gen(a, r | c, u, xi) over
// the enumerated space. Throws DegenerateError when every joint is zero.
Posterior exact_posterior(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                          const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t max_act_len);

// log sum_h p_ret(xi | c, u) p_gen(a, r | c, u, xi).
double exact_marginal(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                      const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t max_act_len);

double total_variation(const Posterior& p, const Posterior& q);

// Writes rows into a tabular model so that its distribution over targets
// given `condition` is exactly `dist` (EOS-terminated targets, masses summing
// to one). The model's order must cover condition plus the longest target.
void fit_table(SequenceModel& model, TokenSpan condition, const std::vector<std::pair<Tokens, double>>& dist);

// A tabular inference model reproducing `target` over latent states for one
// turn. A share `invalid_mass` of its outputs is diverted to an unparseable
// sequence.
Phi proposal_from_posterior(const Posterior& target, TokenSpan context, TokenSpan user, TokenSpan response,
                            const KnowledgeBase& kb, std::size_t vocab_size, double invalid_mass = 0.0);

// (1 - mix) * p + mix * r with r a random distribution over the same states.
Posterior perturb_posterior(const Posterior& p, double mix, Rng& rng);

struct ChainRun {
  Posterior empirical;  // visit frequencies of the chain states
  SamplerStats stats;
  std::size_t steps = 0;
};

// Runs one turn's MIS chain from an empty cache for `steps` transitions and
// histograms the state after every transition.
ChainRun run_turn_chain(const Theta& theta, const Phi& phi, const TurnView& turn, std::size_t steps, Rng& rng,
                        const SamplerConfig& config);

// Small fully enumerable problem with random hashed parameters.
struct TinyInstance {
  Vocabulary vocab;
  KnowledgeBase kb;
  Tokens context;
  Tokens user;
  Tokens response;
  Theta theta;
  std::size_t max_act_len = 1;
};

TinyInstance random_tiny_instance(std::uint64_t seed, std::size_t kb_size, std::size_t content_words,
                                  std::size_t max_act_len, double weight_scale = 1.0);

}  // namespace krtod
