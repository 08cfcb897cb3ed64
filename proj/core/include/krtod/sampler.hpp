#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "krtod/model.hpp"

namespace krtod {

// Persistent per-turn chain states h_bar, keyed by (dialog id, 1-based turn).
class LatentCache {
 public:
  const LatentState* find(const std::string& dialog_id, std::size_t turn) const;
  void set(const std::string& dialog_id, std::size_t turn, LatentState state);
  std::size_t size() const { return states_.size(); }
  std::size_t count(const std::string& dialog_id) const;
  void clear() { states_.clear(); }

 private:
  std::map<std::pair<std::string, std::size_t>, LatentState> states_;
};

struct SamplerConfig {
  std::size_t max_act_len = 8;
  std::size_t steps_per_visit = 1;       // MIS steps per turn per visit
  std::size_t first_visit_attempts = 8;  // proposals tried before giving up on an empty cache entry
};

struct SamplerStats {
  std::size_t proposals = 0;
  std::size_t invalid = 0;  // failed to parse; rejected outright
  std::size_t accepted = 0;
  std::size_t first_visits = 0;

  double acceptance_rate() const {
    return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  }
  SamplerStats& operator+=(const SamplerStats& o);
};

struct TurnView {
  TokenSpan context;
  TokenSpan user;
  TokenSpan response;
  const KnowledgeBase* kb = nullptr;
};

// log w(h) = log p_ret(xi | c, u) + log p_gen(a, r | c, u, xi) - log q(xi, a | c, u, r)
double importance_log_ratio(const Theta& theta, const Phi& phi, const TurnView& turn, const LatentState& h);

// Acceptance rule in log space: log(eta) <= min(0, proposed - current).
bool mis_accept(double log_w_proposed, double log_w_current, double eta);

// Source of the acceptance uniforms; defaults to drawing from the chain's rng.
using EtaSource = std::function<double(Rng&)>;

// One MIS transition of a single turn's chain. `current` holds h_bar and is
// replaced on acceptance; an empty `current` accepts the first valid proposal.
// Returns true when a proposal was accepted.
bool mis_step(const Theta& theta, const Phi& phi, const TurnView& turn, std::optional<LatentState>& current,
              Rng& rng, const SamplerConfig& config, SamplerStats* stats = nullptr, const EtaSource& eta = {});

// mis_step on turn t (1-based) of a dialog, reading and writing the cache.
// Returns the cached state after the step, or nothing when the turn has no
// state yet (every first-visit proposal was invalid).
std::optional<LatentState> mis_step(const Theta& theta, const Phi& phi, const Dialog& dialog, std::size_t t,
                                    LatentCache& cache, Rng& rng, const SamplerConfig& config,
                                    SamplerStats* stats = nullptr);

// Sweeps t = 1..T. Contexts come from the observed utterances only.
std::vector<std::optional<LatentState>> sample_dialog_latents(const Theta& theta, const Phi& phi,
                                                              const Dialog& dialog, LatentCache& cache, Rng& rng,
                                                              const SamplerConfig& config,
                                                              SamplerStats* stats = nullptr);

// Independent stream for one dialog at one epoch.
Rng dialog_rng(std::uint64_t seed, const std::string& dialog_id, std::uint64_t epoch);

}  // namespace krtod
