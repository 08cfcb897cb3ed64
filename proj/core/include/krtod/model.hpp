#pragma once

#include <compare>
#include <optional>
#include <string>

#include "krtod/corpus.hpp"
#include "krtod/retriever.hpp"
#include "krtod/sequence_model.hpp"

namespace krtod {

// Latent state of one turn: the selected knowledge and the system act.
struct LatentState {
  KbMask mask;
  Tokens act;  // ends with EOS

  auto operator<=>(const LatentState&) const = default;
  bool operator==(const LatentState&) const = default;
};

struct ModelConfig {
  EncoderConfig retriever;
  EncoderConfig generator;
  EncoderConfig inference;
  std::size_t max_act_len = 8;        // content tokens, EOS excluded
  std::size_t max_response_len = 48;  // content tokens, EOS excluded
  double threshold = 0.5;

  bool operator==(const ModelConfig&) const = default;
};

struct Theta {
  Retriever retriever;
  SequenceModel generator;

  bool operator==(const Theta&) const = default;
};

struct Phi {
  SequenceModel inference;

  bool operator==(const Phi&) const = default;
};

// Everything a checkpoint holds.
struct Model {
  ModelConfig config;
  Theta theta;
  Phi phi;

  Model() = default;
  Model(const ModelConfig& config, std::size_t vocab_size);

  bool operator==(const Model&) const = default;
};

// Acts are 1..max_len content tokens followed by EOS.
bool valid_act(TokenSpan act, std::size_t max_len);
Tokens with_eos(TokenSpan seq);

// Model input/output layouts.
//   generator:  c <u> u <kb> xi          ->  act <eoa> r EOS
//   inference:  c <u> u <r> r            ->  xi <eok> act EOS
Tokens generator_condition(TokenSpan context, TokenSpan user, TokenSpan xi);
Tokens generator_target(TokenSpan act, TokenSpan response);
Tokens inference_condition(TokenSpan context, TokenSpan user, TokenSpan response);
Tokens inference_target(TokenSpan xi, TokenSpan act);

// Splits an inference-model output into a latent state. Empty when the xi
// part is not a canonical rendering of a kb subset or the act is invalid.
std::optional<LatentState> parse_inference_output(TokenSpan output, const KnowledgeBase& kb,
                                                  std::size_t max_act_len);

// Longest inference output that can parse for this kb.
std::size_t inference_max_len(const KnowledgeBase& kb, std::size_t max_act_len);

struct GeneratorOutput {
  Tokens act;  // ends with EOS unless truncated
  Tokens response;
  bool truncated = false;  // no <eoa> was emitted
};

GeneratorOutput split_generator_output(TokenSpan output);

// log p_ret(xi | c, u) + log p_gen(a, r | c, u, xi)
double joint_log_prob(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                      const KnowledgeBase& kb, const LatentState& h);

// log q(xi, a | c, u, r)
double proposal_log_prob(const Phi& phi, TokenSpan context, TokenSpan user, TokenSpan response,
                         const KnowledgeBase& kb, const LatentState& h);

// Binary checkpoint: header (magic, version, vocabulary fingerprint and size,
// per-model backend/order/dim/seed) followed by the raw parameter arrays.
void save_checkpoint(const Model& model, const Vocabulary& vocab, const std::string& path);
Model load_checkpoint(const std::string& path, const Vocabulary& vocab);
// Checks nothing against a vocabulary; for inspection tools.
Model load_checkpoint_unchecked(const std::string& path);

}  // namespace krtod
