#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "krtod/metrics.hpp"
#include "krtod/model.hpp"

namespace krtod {

enum class DecodeMode { kGreedy, kSampled };

DecodeMode decode_mode_from_string(const std::string& s);  // throws ConfigError

struct TurnPrediction {
  KbMask mask;
  Tokens act;  // ends with EOS; empty when truncated
  Tokens response;
  bool truncated = false;  // the generator never closed the act
};

// Retrieve by thresholding, then generate act and response conditioned on the
// retrieved knowledge. `rng` is only drawn from in sampled mode.
TurnPrediction respond(const Model& model, TokenSpan context, TokenSpan user, const KnowledgeBase& kb,
                       double threshold, DecodeMode mode, Rng& rng);

struct PredictionRecord {
  std::string dialog_id;
  std::size_t turn = 0;  // 1-based
  std::vector<std::size_t> mask;
  std::string act;
  std::string response;
  bool truncated = false;

  bool operator==(const PredictionRecord&) const = default;
};

// One record per turn in corpus order, using the gold history as context.
// Work is split across `threads` workers; output order does not depend on it.
std::vector<PredictionRecord> run_corpus(const Model& model, const Corpus& corpus, double threshold,
                                         DecodeMode mode, std::uint64_t seed, std::size_t threads = 1);

std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> predictions_from_jsonl(const std::string& text);
void save_predictions(const std::vector<PredictionRecord>& records, const std::string& path);
std::vector<PredictionRecord> load_predictions(const std::string& path);

// Groups predictions by gold dialog/turn. Throws ShapeError on any mismatch.
std::vector<std::vector<std::string>> align_predictions(const std::vector<PredictionRecord>& records,
                                                        const Corpus& gold);

EvalReport evaluate_predictions(const std::vector<PredictionRecord>& records, const Corpus& gold);

}  // namespace krtod
