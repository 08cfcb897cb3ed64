#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "krtod/decode.hpp"
#include "krtod/metrics.hpp"
#include "krtod/model.hpp"
#include "krtod/sampler.hpp"

namespace krtod {

enum class Method { kSupervised, kJsa, kPl };

std::string to_string(Method m);
Method method_from_string(const std::string& s);  // throws ConfigError

// Unlabeled : labeled dialog volume, e.g. 9:1.
struct Ratio {
  std::size_t unlabeled = 9;
  std::size_t labeled = 1;

  static Ratio parse(const std::string& s);  // "U:L", throws ConfigError
  std::string str() const;
  bool operator==(const Ratio&) const = default;
};

struct TrainConfig {
  Method method = Method::kJsa;
  Backend backend = Backend::kHashed;
  std::size_t dim = 4096;
  std::size_t order = 2;
  bool copy_generator = false;
  bool copy_inference = true;
  // Unset rates fall back to default_learning_rate(backend).
  std::optional<double> lr_retriever, lr_generator, lr_inference;
  std::size_t pretrain_epochs = 10;
  std::size_t semi_epochs = 10;
  std::size_t batch_size = 1;
  Ratio ratio;
  double threshold = 0.5;
  std::uint64_t seed = 1;
  std::size_t max_act_len = 8;
  std::size_t max_response_len = 48;
  std::size_t mis_steps = 1;
  std::size_t first_visit_attempts = 8;
  std::size_t patience = 0;  // epochs without dev improvement before stopping; 0 runs every epoch

  void check() const;  // throws ConfigError
  double retriever_rate() const;
  double generator_rate() const;
  double inference_rate() const;
  ModelConfig model_config() const;
  SamplerConfig sampler_config() const;
};

double default_learning_rate(Backend backend);

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& config);

struct ObjectiveAccumulators {
  double j_theta = 0.0;  // log p_ret + log p_gen of the trained turns
  double j_phi = 0.0;    // log q of the trained turns
};

struct EpochReport {
  std::string phase;  // "pretrain" or "semi"
  std::size_t epoch = 0;  // 1-based within the phase
  ObjectiveAccumulators objective;
  std::optional<EvalReport> dev;
  SamplerStats sampler;
  std::size_t dialogs = 0;
  std::size_t skipped_turns = 0;  // unlabeled turns without a usable latent
};

struct TrainHooks {
  const Corpus* dev = nullptr;  // enables per-epoch dev scores and early stopping
  std::function<void(const EpochReport&)> on_epoch;
  // Latents used for one unlabeled dialog (after sampling or pseudo-labeling).
  std::function<void(const Dialog&, std::size_t epoch, const std::vector<std::optional<LatentState>>&)> on_latents;
};

// Interleaved epoch stream: blocks of `ratio.unlabeled` unlabeled ids then
// `ratio.labeled` labeled ids until the shuffled unlabeled pool is used up.
// Labeled ids are drawn by cycling through fresh permutations. With
// ratio.unlabeled = 0 the stream is one permutation of the labeled pool.
std::vector<std::string> mix_batches(const std::vector<std::string>& labeled_ids,
                                     const std::vector<std::string>& unlabeled_ids, Ratio ratio, Rng& rng);

// First round(|labeled| * U / L) unlabeled dialogs (all of them if fewer).
Corpus select_unlabeled(const Corpus& unlabeled, std::size_t labeled_count, Ratio ratio);

struct GradientBuffers {
  RetrieverGradient retriever;
  SequenceGradient generator;
  SequenceGradient inference;
};

// Adds scale * gradients of one turn's completed-data log-likelihoods; the
// retriever only contributes when update_retriever is set. Returns the terms.
ObjectiveAccumulators accumulate_turn(const Model& model, const TurnView& turn, const LatentState& h, double scale,
                                      GradientBuffers& grads, bool update_retriever);

// J terms of a labeled corpus at fixed parameters.
ObjectiveAccumulators compute_objectives(const Model& model, const Corpus& labeled);

Model initial_model(const TrainConfig& config, std::size_t vocab_size);

// Algorithm start: supervised epochs on labeled data from the initial model.
Model supervised_pretrain(const Corpus& labeled, const TrainConfig& config, const TrainHooks& hooks = {});

// More supervised epochs (semi_epochs of them) from `start`, drawn from the
// same stream a semi-supervised run would use.
Model supervised_continue(const Corpus& labeled, const TrainConfig& config, Model start,
                          const TrainHooks& hooks = {});

Model jsa_train(const Corpus& labeled, const Corpus& unlabeled, const TrainConfig& config, Model pretrained,
                const TrainHooks& hooks = {});
Model pl_train(const Corpus& labeled, const Corpus& unlabeled, const TrainConfig& config, Model pretrained,
               const TrainHooks& hooks = {});

// Dispatch on config.method; supervised ignores the unlabeled pool.
Model semi_train(const Corpus& labeled, const Corpus& unlabeled, const TrainConfig& config, Model pretrained,
                 const TrainHooks& hooks = {});

struct SweepRow {
  Method method = Method::kJsa;
  Ratio ratio;
  EvalReport report;
  std::optional<double> p_value;  // JSA vs PL on the same ratio
};

struct SweepOptions {
  std::vector<Ratio> ratios = {{1, 1}, {2, 1}, {4, 1}, {9, 1}};
  std::size_t permutations = 10000;
  std::uint64_t test_seed = 7;
  std::size_t threads = 1;
  std::function<void(const SweepRow&)> on_row;
};

// Pretrains once, then trains JSA and PL per ratio and scores both on `test`.
std::vector<SweepRow> run_ratio_sweep(const Corpus& labeled, const Corpus& unlabeled, const Corpus& test,
                                      const TrainConfig& config, const SweepOptions& options,
                                      const TrainHooks& hooks = {});

}  // namespace krtod
