#include "krtod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"
#include "krtod/vocabulary.hpp"

namespace krtod {

namespace {

using Words = std::vector<std::string>;

bool contains_run(const Words& hay, const Words& needle) {
  if (needle.empty()) return true;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

struct NgramStats {
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double hyp_len = 0;
  double ref_len = 0;
};

void add_pair(NgramStats& s, const Words& hyp, const Words& ref) {
  s.hyp_len += static_cast<double>(hyp.size());
  s.ref_len += static_cast<double>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Words, int> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[Words(ref.begin() + i, ref.begin() + i + n)];
    std::map<Words, int> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[Words(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [g, c] : hyp_counts) {
      auto it = ref_counts.find(g);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
}

NgramStats collect(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.empty()) throw DomainError("BLEU needs at least one hypothesis");
  if (hypotheses.size() != references.size())
    throw ShapeError("BLEU got " + std::to_string(hypotheses.size()) + " hypotheses for " +
                     std::to_string(references.size()) + " references");
  NgramStats s;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) add_pair(s, split_words(hypotheses[i]), split_words(references[i]));
  return s;
}

double brevity_penalty(const NgramStats& s) {
  if (s.hyp_len <= 0) return 0.0;
  return std::min(1.0, std::exp(1.0 - s.ref_len / s.hyp_len));
}

}  // namespace

SuccessResult success_rate(const std::vector<std::vector<std::string>>& responses, const Corpus& gold) {
  if (responses.size() != gold.dialogs.size())
    throw ShapeError("got predictions for " + std::to_string(responses.size()) + " dialogs, gold has " +
                     std::to_string(gold.dialogs.size()));
  SuccessResult out;
  std::size_t hits = 0;
  for (std::size_t d = 0; d < gold.dialogs.size(); ++d) {
    const Dialog& dialog = gold.dialogs[d];
    if (responses[d].size() != dialog.turns.size())
      throw ShapeError("dialog " + dialog.id + ": got " + std::to_string(responses[d].size()) +
                       " predicted turns, gold has " + std::to_string(dialog.turns.size()));
    bool ok = true;
    for (std::size_t t = 0; t < dialog.turns.size() && ok; ++t) {
      const Turn& turn = dialog.turns[t];
      if (!turn.gold_xi) throw DomainError("dialog " + dialog.id + " has no gold labels to score Success against");
      const Words said = split_words(responses[d][t]);
      for (std::size_t i : mask_to_indices(*turn.gold_xi))
        if (!contains_run(said, split_words(dialog.kb[i].value))) {
          ok = false;
          break;
        }
    }
    out.per_dialog.push_back(ok);
    hits += ok ? 1 : 0;
  }
  out.rate = gold.dialogs.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(gold.dialogs.size());
  return out;
}

double bleu4(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  const NgramStats s = collect(hypotheses, references);
  if (s.hyp_len <= 0 || s.matches[0] <= 0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) {
    const double p = s.matches[n] > 0 ? s.matches[n] / s.totals[n] : 1.0 / (2.0 * s.hyp_len);
    log_p += 0.25 * std::log(p);
  }
  return 100.0 * brevity_penalty(s) * std::exp(log_p);
}

double smoothed_bleu4(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  const NgramStats s = collect(hypotheses, references);
  if (s.hyp_len <= 0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) log_p += 0.25 * std::log((s.matches[n] + 1.0) / (s.totals[n] + 1.0));
  return 100.0 * brevity_penalty(s) * std::exp(log_p);
}

double matched_pairs_test(const std::vector<double>& a, const std::vector<double>& b, std::size_t permutations,
                          std::uint64_t seed) {
  if (a.size() != b.size())
    throw ShapeError("paired test needs equal-length score lists, got " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  if (permutations < 1000) throw ConfigError("paired test needs at least 1000 permutations");
  if (a.empty()) return 1.0;
  std::vector<double> diff(a.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff[i] = a[i] - b[i];
    scale = std::max(scale, std::abs(diff[i]));
  }
  const double n = static_cast<double>(diff.size());
  double observed = 0.0;
  for (double d : diff) observed += d;
  observed = std::abs(observed) / n;
  const double tol = 1e-12 * std::max(scale, 1.0);
  Rng rng(derive_seed(seed, "matched-pairs"));
  std::size_t hits = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    double sum = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
      if (i % 64 == 0) bits = rng();
      sum += (bits & 1U) ? diff[i] : -diff[i];
      bits >>= 1;
    }
    if (std::abs(sum) / n >= observed - tol) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(1 + permutations);
}

EvalReport evaluate(const std::vector<std::vector<std::string>>& responses, const Corpus& gold) {
  EvalReport report;
  const SuccessResult success = success_rate(responses, gold);
  std::vector<std::string> hyps, refs;
  for (std::size_t d = 0; d < gold.dialogs.size(); ++d) {
    const Dialog& dialog = gold.dialogs[d];
    std::vector<std::string> dh, dr;
    for (std::size_t t = 0; t < dialog.turns.size(); ++t) {
      dh.push_back(responses[d][t]);
      dr.push_back(gold.vocab.decode(dialog.turns[t].response));
    }
    DialogScore score;
    score.id = dialog.id;
    score.success = success.per_dialog[d];
    score.bleu = dh.empty() ? 0.0 : smoothed_bleu4(dh, dr);
    report.per_dialog.push_back(std::move(score));
    hyps.insert(hyps.end(), dh.begin(), dh.end());
    refs.insert(refs.end(), dr.begin(), dr.end());
  }
  report.success = success.rate;
  report.bleu4 = hyps.empty() ? 0.0 : bleu4(hyps, refs);
  report.combined = combined(report.success, report.bleu4);
  return report;
}

std::vector<double> per_dialog_combined(const EvalReport& report) {
  std::vector<double> out;
  out.reserve(report.per_dialog.size());
  for (const auto& d : report.per_dialog) out.push_back(d.combined());
  return out;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string format_success(double v) { return fixed(v, 1); }

std::string format_bleu(double v) {
  if (v == 0.0 || !std::isfinite(v)) return fixed(v, 1);
  const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(v))));
  return fixed(v, std::max(0, 3 - magnitude));
}

std::string format_combined(double v) { return fixed(v, 2); }

std::string report_to_json(const EvalReport& report, int indent) {
  nlohmann::ordered_json j;
  j["success"] = report.success;
  j["bleu4"] = report.bleu4;
  j["combined"] = report.combined;
  j["display"] = {{"success", format_success(report.success)},
                  {"bleu4", format_bleu(report.bleu4)},
                  {"combined", format_combined(report.combined)}};
  j["p_value"] = report.p_value ? nlohmann::ordered_json(*report.p_value) : nlohmann::ordered_json(nullptr);
  auto& rows = j["per_dialog"] = nlohmann::ordered_json::array();
  for (const auto& d : report.per_dialog)
    rows.push_back({{"id", d.id}, {"success", d.success ? 1 : 0}, {"bleu", d.bleu}, {"combined", d.combined()}});
  return j.dump(indent);
}

}  // namespace krtod
