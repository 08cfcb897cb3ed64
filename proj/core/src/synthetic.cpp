#include "krtod/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"
#include "krtod/keyvalue.hpp"

namespace krtod {

namespace {

const std::vector<std::string> kTemplateWords = {"what", "is",  "the", "of",      "and",    ",",   "thanks",
                                                 "ok",   "you", "are", "welcome", "inform", "ack"};

const std::vector<std::string> kSlotNames = {
    "price",   "data",     "minutes", "sms",      "fee",     "speed",   "balance",  "points",
    "duration", "roaming", "bandwidth", "deposit", "penalty", "quota",  "discount", "coverage",
    "contract", "renewal", "voicemail", "hotspot", "storage", "bonus",  "tariff",   "validity"};

}  // namespace

void CorpusConfig::check() const {
  if (dialogs == 0) throw ConfigError("dialogs must be positive");
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (min_turns == 0 || min_turns > max_turns) throw ConfigError("need 1 <= min_turns <= max_turns");
  if (min_kb == 0 || min_kb > max_kb) throw ConfigError("need 1 <= min_kb <= max_kb");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise_rate must lie in [0, 1)");
  if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0))
    throw ConfigError("labeled_fraction must lie in [0, 1]");
  const std::size_t fixed = Vocabulary::structural_tokens().size() + kTemplateWords.size();
  if (vocab_size < fixed + 9)
    throw ConfigError("vocab_size must be at least " + std::to_string(fixed + 9));
}

CorpusConfig parse_corpus_config(const std::string& text) {
  CorpusConfig c;
  for (const auto& kv : parse_key_values(text)) {
    const auto& key = kv.key;
    if (key == "dialogs") c.dialogs = kv_size(kv);
    else if (key == "min_turns") c.min_turns = kv_size(kv);
    else if (key == "max_turns") c.max_turns = kv_size(kv);
    else if (key == "min_kb") c.min_kb = kv_size(kv);
    else if (key == "max_kb") c.max_kb = kv_size(kv);
    else if (key == "vocab_size") c.vocab_size = kv_size(kv);
    else if (key == "noise_rate") c.noise_rate = kv_double(kv);
    else if (key == "labeled_fraction") c.labeled_fraction = kv_double(kv);
    else if (key == "seed") c.seed = kv_u64(kv);
    else kv_unknown(kv);
  }
  c.check();
  return c;
}

std::string format_corpus_config(const CorpusConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "dialogs = " << c.dialogs << "\n"
      << "min_turns = " << c.min_turns << "\n"
      << "max_turns = " << c.max_turns << "\n"
      << "min_kb = " << c.min_kb << "\n"
      << "max_kb = " << c.max_kb << "\n"
      << "vocab_size = " << c.vocab_size << "\n"
      << "noise_rate = " << c.noise_rate << "\n"
      << "labeled_fraction = " << c.labeled_fraction << "\n"
      << "seed = " << c.seed << "\n";
  return out.str();
}

CorpusConfig load_corpus_config(const std::string& path) { return parse_corpus_config(read_text_file(path)); }

void save_corpus_config(const CorpusConfig& config, const std::string& path) {
  write_text_file(path, format_corpus_config(config));
}

SyntheticDomain::SyntheticDomain(const CorpusConfig& config) : config_(config) {
  config_.check();
  for (const auto& w : kTemplateWords) vocab_.add(w);
  const std::size_t rest = config_.vocab_size - vocab_.size();
  const std::size_t n_slots = std::clamp<std::size_t>(rest / 12, 2, kSlotNames.size());
  const std::size_t n_entities = std::clamp<std::size_t>(rest / 10, 2, 120);
  const std::size_t n_fillers = std::clamp<std::size_t>(rest / 12, 1, 60);
  const std::size_t n_values = rest - n_slots - n_entities - n_fillers;
  if (n_slots * n_entities < config_.max_kb)
    throw ConfigError("vocab_size too small for max_kb distinct (entity, slot) pairs");
  char buf[32];
  for (std::size_t i = 0; i < n_slots; ++i) slots_.push_back(kSlotNames[i]);
  for (std::size_t i = 0; i < n_entities; ++i) {
    std::snprintf(buf, sizeof buf, "plan%zu", i);
    entities_.emplace_back(buf);
  }
  for (std::size_t i = 0; i < n_values; ++i) {
    std::snprintf(buf, sizeof buf, "v%zu", i);
    values_.emplace_back(buf);
  }
  for (std::size_t i = 0; i < n_fillers; ++i) {
    std::snprintf(buf, sizeof buf, "um%zu", i);
    fillers_.emplace_back(buf);
  }
  for (const auto* pool : {&slots_, &entities_, &values_, &fillers_})
    for (const auto& w : *pool) vocab_.add(w);
}

Corpus SyntheticDomain::generate(std::size_t count, double labeled_fraction, std::uint64_t seed,
                                 const std::string& stream, const std::string& id_prefix) const {
  Rng rng(derive_seed(seed, "synthetic/" + stream));
  auto uniform_index = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  auto coin = [&rng](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
  auto id_of = [this](const std::string& w) { return vocab_.id(w); };

  Corpus corpus;
  corpus.vocab = vocab_;
  corpus.dialogs.reserve(count);
  char idbuf[64];
  for (std::size_t d = 0; d < count; ++d) {
    Dialog dialog;
    std::snprintf(idbuf, sizeof idbuf, "%s-%06zu", id_prefix.c_str(), d);
    dialog.id = idbuf;

    const std::size_t n_kb = config_.min_kb + uniform_index(config_.max_kb - config_.min_kb + 1);
    // Entities needed so that n_kb distinct (entity, slot) pairs exist.
    const std::size_t min_ent = (n_kb + slots_.size() - 1) / slots_.size();
    const std::size_t max_ent = std::min(entities_.size(), std::max<std::size_t>(min_ent, (n_kb + 1) / 2));
    const std::size_t n_ent = min_ent + uniform_index(max_ent - min_ent + 1);
    std::vector<std::size_t> ents(entities_.size());
    std::iota(ents.begin(), ents.end(), 0);
    std::shuffle(ents.begin(), ents.end(), rng);
    ents.resize(n_ent);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (auto e : ents)
      for (std::size_t s = 0; s < slots_.size(); ++s) pairs.emplace_back(e, s);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(n_kb);
    for (const auto& [e, s] : pairs)
      dialog.kb.add(entities_[e], slots_[s], values_[uniform_index(values_.size())], vocab_);

    const std::size_t n_turns = config_.min_turns + uniform_index(config_.max_turns - config_.min_turns + 1);
    for (std::size_t t = 0; t < n_turns; ++t) {
      Turn turn;
      KbMask mask(n_kb, 0);
      Tokens act;
      Tokens user;
      if (t == 0 || coin(0.8)) {
        std::size_t k = coin(0.6) ? 1 : (coin(0.75) ? 2 : 3);
        k = std::min(k, n_kb);
        std::vector<std::size_t> order(n_kb);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(k);
        for (auto i : order) mask[i] = 1;
        // The user names the entries in random order.
        user = {id_of("what"), id_of("is")};
        for (std::size_t j = 0; j < order.size(); ++j) {
          if (j > 0) user.push_back(id_of("and"));
          const auto& sv = dialog.kb[order[j]];
          user.insert(user.end(), {id_of("the"), id_of(sv.slot), id_of("of"), id_of(sv.entity)});
        }
        act.push_back(id_of("inform"));
        bool first = true;
        for (std::size_t i = 0; i < n_kb; ++i) {
          if (!mask[i]) continue;
          const auto& sv = dialog.kb[i];
          act.push_back(id_of(sv.slot));
          if (!first) turn.response.push_back(id_of(","));
          first = false;
          turn.response.insert(turn.response.end(), {id_of(sv.entity), id_of(sv.slot), id_of("is")});
          const auto value = vocab_.encode(sv.value);
          turn.response.insert(turn.response.end(), value.begin(), value.end());
        }
      } else {
        user = coin(0.5) ? Tokens{id_of("thanks")} : Tokens{id_of("ok"), id_of("thanks")};
        act = {id_of("ack")};
        turn.response = {id_of("you"), id_of("are"), id_of("welcome")};
      }
      if (config_.noise_rate > 0.0) {
        Tokens noisy;
        for (std::size_t i = 0; i <= user.size(); ++i) {
          if (coin(config_.noise_rate)) noisy.push_back(id_of(fillers_[uniform_index(fillers_.size())]));
          if (i < user.size()) noisy.push_back(user[i]);
        }
        user = std::move(noisy);
      }
      turn.user = std::move(user);
      turn.gold_xi = std::move(mask);
      turn.gold_act = std::move(act);
      dialog.turns.push_back(std::move(turn));
    }
    corpus.dialogs.push_back(std::move(dialog));
  }

  const auto n_labeled = static_cast<std::size_t>(std::llround(labeled_fraction * static_cast<double>(count)));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> keep(count, 0);
  for (std::size_t i = 0; i < n_labeled; ++i) keep[order[i]] = 1;
  for (std::size_t d = 0; d < count; ++d) {
    auto& dialog = corpus.dialogs[d];
    dialog.labeled = keep[d] != 0;
    if (!dialog.labeled) {
      for (auto& turn : dialog.turns) {
        turn.gold_xi.reset();
        turn.gold_act.reset();
      }
    }
  }
  return corpus;
}

Corpus generate_synthetic_corpus(const CorpusConfig& config, std::uint64_t seed) {
  SyntheticDomain domain(config);
  return domain.generate(config.dialogs, config.labeled_fraction, seed, "train", "dlg");
}

namespace {
Corpus filter(const Corpus& corpus, bool labeled) {
  Corpus out;
  out.vocab = corpus.vocab;
  for (const auto& d : corpus.dialogs)
    if (d.labeled == labeled) out.dialogs.push_back(d);
  return out;
}
}  // namespace

Corpus labeled_part(const Corpus& corpus) { return filter(corpus, true); }
Corpus unlabeled_part(const Corpus& corpus) { return filter(corpus, false); }

}  // namespace krtod
