#include "krtod/sampler.hpp"

#include <cmath>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"

namespace krtod {

const LatentState* LatentCache::find(const std::string& dialog_id, std::size_t turn) const {
  auto it = states_.find({dialog_id, turn});
  return it == states_.end() ? nullptr : &it->second;
}

void LatentCache::set(const std::string& dialog_id, std::size_t turn, LatentState state) {
  states_[{dialog_id, turn}] = std::move(state);
}

std::size_t LatentCache::count(const std::string& dialog_id) const {
  auto it = states_.lower_bound({dialog_id, 0});
  std::size_t n = 0;
  for (; it != states_.end() && it->first.first == dialog_id; ++it) ++n;
  return n;
}

SamplerStats& SamplerStats::operator+=(const SamplerStats& o) {
  proposals += o.proposals;
  invalid += o.invalid;
  accepted += o.accepted;
  first_visits += o.first_visits;
  return *this;
}

double importance_log_ratio(const Theta& theta, const Phi& phi, const TurnView& turn, const LatentState& h) {
  return joint_log_prob(theta, turn.context, turn.user, turn.response, *turn.kb, h) -
         proposal_log_prob(phi, turn.context, turn.user, turn.response, *turn.kb, h);
}

bool mis_accept(double log_w_proposed, double log_w_current, double eta) {
  return std::log(eta) <= std::min(0.0, log_w_proposed - log_w_current);
}

bool mis_step(const Theta& theta, const Phi& phi, const TurnView& turn, std::optional<LatentState>& current,
              Rng& rng, const SamplerConfig& config, SamplerStats* stats, const EtaSource& eta) {
  const Tokens cond = inference_condition(turn.context, turn.user, turn.response);
  const std::size_t max_len = inference_max_len(*turn.kb, config.max_act_len);
  SamplerStats local;
  const bool first = !current.has_value();
  const std::size_t attempts = first ? std::max<std::size_t>(config.first_visit_attempts, 1) : 1;
  bool accepted = false;
  for (std::size_t i = 0; i < attempts; ++i) {
    ++local.proposals;
    auto proposal = parse_inference_output(phi.inference.sample(cond, rng, max_len), *turn.kb, config.max_act_len);
    if (!proposal) {
      ++local.invalid;
      continue;
    }
    if (first) {
      ++local.first_visits;
      ++local.accepted;
      current = std::move(*proposal);
      accepted = true;
      break;
    }
    const double log_w_new = importance_log_ratio(theta, phi, turn, *proposal);
    const double log_w_old = importance_log_ratio(theta, phi, turn, *current);
    const double u = eta ? eta(rng) : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (mis_accept(log_w_new, log_w_old, u)) {
      ++local.accepted;
      accepted = true;
      current = std::move(*proposal);
    }
  }
  if (stats) *stats += local;
  return accepted;
}

std::optional<LatentState> mis_step(const Theta& theta, const Phi& phi, const Dialog& dialog, std::size_t t,
                                    LatentCache& cache, Rng& rng, const SamplerConfig& config,
                                    SamplerStats* stats) {
  if (dialog.labeled) throw DomainError("MIS runs on unlabeled dialogs only: " + dialog.id);
  if (t < 1 || t > dialog.turns.size())
    throw RangeError("turn " + std::to_string(t) + " out of range for dialog " + dialog.id);
  const Tokens context = build_context(dialog, t);
  const Turn& turn = dialog.turns[t - 1];
  const TurnView view{context, turn.user, turn.response, &dialog.kb};
  std::optional<LatentState> current;
  if (const auto* cached = cache.find(dialog.id, t)) current = *cached;
  for (std::size_t s = 0; s < std::max<std::size_t>(config.steps_per_visit, 1); ++s) {
    if (mis_step(theta, phi, view, current, rng, config, stats)) cache.set(dialog.id, t, *current);
  }
  return current;
}

std::vector<std::optional<LatentState>> sample_dialog_latents(const Theta& theta, const Phi& phi,
                                                              const Dialog& dialog, LatentCache& cache, Rng& rng,
                                                              const SamplerConfig& config, SamplerStats* stats) {
  std::vector<std::optional<LatentState>> out;
  out.reserve(dialog.turns.size());
  for (std::size_t t = 1; t <= dialog.turns.size(); ++t)
    out.push_back(mis_step(theta, phi, dialog, t, cache, rng, config, stats));
  return out;
}

Rng dialog_rng(std::uint64_t seed, const std::string& dialog_id, std::uint64_t epoch) {
  return Rng(derive_seed(seed, "mis/" + dialog_id, {epoch}));
}

}  // namespace krtod
