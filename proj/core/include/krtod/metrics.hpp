#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "krtod/corpus.hpp"

namespace krtod {

struct DialogScore {
  std::string id;
  bool success = false;
  double bleu = 0.0;  // smoothed dialog-level BLEU-4, percent

  double combined() const { return 100.0 * (success ? 1.0 : 0.0) + 2.0 * bleu; }
};

struct EvalReport {
  double success = 0.0;  // percent
  double bleu4 = 0.0;    // corpus-level, percent
  double combined = 0.0;
  std::vector<DialogScore> per_dialog;
  std::optional<double> p_value;
};

struct SuccessResult {
  double rate = 0.0;
  std::vector<bool> per_dialog;
};

// A dialog succeeds when every turn's response contains, as a contiguous word
// sequence, the value of every knowledge entry selected by the gold labels.
// `responses[d][t]` is the prediction for turn t of dialog d.
SuccessResult success_rate(const std::vector<std::vector<std::string>>& responses, const Corpus& gold);

// Corpus-level BLEU-4 with uniform weights, clipped counts and brevity
// penalty min(1, exp(1 - ref/hyp)). A zero unigram precision gives 0; a zero
// precision at a higher order is replaced by 1 / (2 * hypothesis length).
double bleu4(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

// Add-one smoothing at every order; used for per-dialog scores.
double smoothed_bleu4(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

inline double combined(double success, double bleu) { return success + 2.0 * bleu; }

// Two-sided paired sign-flip test on the differences a_i - b_i. The identity
// resample is counted, so p = (1 + hits) / (1 + permutations).
double matched_pairs_test(const std::vector<double>& a, const std::vector<double>& b, std::size_t permutations,
                          std::uint64_t seed);

EvalReport evaluate(const std::vector<std::vector<std::string>>& responses, const Corpus& gold);

std::vector<double> per_dialog_combined(const EvalReport& report);

// Display rounding: Success 1 decimal, BLEU 4 significant figures, Combined 2 decimals.
std::string format_success(double v);
std::string format_bleu(double v);
std::string format_combined(double v);

std::string report_to_json(const EvalReport& report, int indent = 2);

}  // namespace krtod
