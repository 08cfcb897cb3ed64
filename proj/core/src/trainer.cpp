#include "krtod/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"
#include "krtod/keyvalue.hpp"

namespace krtod {

std::string to_string(Method m) {
  switch (m) {
    case Method::kSupervised: return "supervised";
    case Method::kJsa: return "jsa";
    case Method::kPl: return "pl";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "supervised") return Method::kSupervised;
  if (s == "jsa") return Method::kJsa;
  if (s == "pl") return Method::kPl;
  throw ConfigError("unknown method '" + s + "' (expected supervised, jsa or pl)");
}

Ratio Ratio::parse(const std::string& s) {
  const auto colon = s.find(':');
  auto number = [&](const std::string& part) -> std::size_t {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("ratio must look like U:L, got '" + s + "'");
    return static_cast<std::size_t>(std::stoull(part));
  };
  if (colon == std::string::npos) throw ConfigError("ratio must look like U:L, got '" + s + "'");
  Ratio r{number(s.substr(0, colon)), number(s.substr(colon + 1))};
  if (r.labeled == 0) throw ConfigError("ratio denominator must be positive");
  return r;
}

std::string Ratio::str() const { return std::to_string(unlabeled) + ":" + std::to_string(labeled); }

double default_learning_rate(Backend backend) { return backend == Backend::kTabular ? 0.1 : 0.01; }

void TrainConfig::check() const {
  if (backend == Backend::kHashed && dim == 0) throw ConfigError("dim must be positive");
  if (backend == Backend::kTabular && order == 0) throw ConfigError("order must be positive");
  for (const auto& lr : {lr_retriever, lr_generator, lr_inference})
    if (lr && !(*lr >= 0.0 && std::isfinite(*lr))) throw ConfigError("learning rates must be finite and >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (ratio.unlabeled == 0 || ratio.labeled == 0) throw ConfigError("ratio terms must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (max_act_len == 0 || max_response_len == 0) throw ConfigError("length limits must be positive");
  if (mis_steps == 0) throw ConfigError("mis_steps must be positive");
}

double TrainConfig::retriever_rate() const { return lr_retriever.value_or(default_learning_rate(backend)); }
double TrainConfig::generator_rate() const { return lr_generator.value_or(default_learning_rate(backend)); }
double TrainConfig::inference_rate() const { return lr_inference.value_or(default_learning_rate(backend)); }

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  EncoderConfig enc;
  enc.backend = backend;
  enc.dim = dim;
  enc.order = order;
  m.retriever = enc;
  m.generator = enc;
  m.inference = enc;
  m.generator.hash_seed = enc.hash_seed + 1;
  m.inference.hash_seed = enc.hash_seed + 2;
  m.generator.copy = copy_generator;
  m.inference.copy = copy_inference;
  m.max_act_len = max_act_len;
  m.max_response_len = max_response_len;
  m.threshold = threshold;
  return m;
}

SamplerConfig TrainConfig::sampler_config() const {
  SamplerConfig s;
  s.max_act_len = max_act_len;
  s.steps_per_visit = mis_steps;
  s.first_visit_attempts = first_visit_attempts;
  return s;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  for (const auto& kv : parse_key_values(text)) {
    const auto& k = kv.key;
    try {
      if (k == "method") c.method = method_from_string(kv.value);
      else if (k == "backend") c.backend = backend_from_string(kv.value);
      else if (k == "dim") c.dim = kv_size(kv);
      else if (k == "order") c.order = kv_size(kv);
      else if (k == "copy_generator") c.copy_generator = kv_bool(kv);
      else if (k == "copy_inference") c.copy_inference = kv_bool(kv);
      else if (k == "lr_retriever") c.lr_retriever = kv_double(kv);
      else if (k == "lr_generator") c.lr_generator = kv_double(kv);
      else if (k == "lr_inference") c.lr_inference = kv_double(kv);
      else if (k == "pretrain_epochs") c.pretrain_epochs = kv_size(kv);
      else if (k == "semi_epochs") c.semi_epochs = kv_size(kv);
      else if (k == "batch_size") c.batch_size = kv_size(kv);
      else if (k == "ratio") c.ratio = Ratio::parse(kv.value);
      else if (k == "threshold") c.threshold = kv_double(kv);
      else if (k == "seed") c.seed = kv_u64(kv);
      else if (k == "max_act_len") c.max_act_len = kv_size(kv);
      else if (k == "max_response_len") c.max_response_len = kv_size(kv);
      else if (k == "mis_steps") c.mis_steps = kv_size(kv);
      else if (k == "first_visit_attempts") c.first_visit_attempts = kv_size(kv);
      else if (k == "patience") c.patience = kv_size(kv);
      else kv_unknown(kv);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      if (what.rfind("line ", 0) == 0) throw;
      throw ConfigError("line " + std::to_string(kv.line) + ": " + what);
    }
  }
  c.check();
  return c;
}

TrainConfig load_train_config(const std::string& path) { return parse_train_config(read_text_file(path)); }

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "method = " << to_string(c.method) << "\n"
      << "backend = " << to_string(c.backend) << "\n"
      << "dim = " << c.dim << "\n"
      << "order = " << c.order << "\n"
      << "copy_generator = " << (c.copy_generator ? "true" : "false") << "\n"
      << "copy_inference = " << (c.copy_inference ? "true" : "false") << "\n"
      << "lr_retriever = " << c.retriever_rate() << "\n"
      << "lr_generator = " << c.generator_rate() << "\n"
      << "lr_inference = " << c.inference_rate() << "\n"
      << "pretrain_epochs = " << c.pretrain_epochs << "\n"
      << "semi_epochs = " << c.semi_epochs << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "ratio = " << c.ratio.str() << "\n"
      << "threshold = " << c.threshold << "\n"
      << "seed = " << c.seed << "\n"
      << "max_act_len = " << c.max_act_len << "\n"
      << "max_response_len = " << c.max_response_len << "\n"
      << "mis_steps = " << c.mis_steps << "\n"
      << "first_visit_attempts = " << c.first_visit_attempts << "\n"
      << "patience = " << c.patience << "\n";
  return out.str();
}

std::vector<std::string> mix_batches(const std::vector<std::string>& labeled_ids,
                                     const std::vector<std::string>& unlabeled_ids, Ratio ratio, Rng& rng) {
  if (ratio.labeled == 0) throw ConfigError("ratio denominator must be positive");
  std::vector<std::string> out;
  std::vector<std::string> lab = labeled_ids;
  if (ratio.unlabeled == 0) {
    std::shuffle(lab.begin(), lab.end(), rng);
    return lab;
  }
  if (unlabeled_ids.empty()) throw ConfigError("ratio " + ratio.str() + " needs unlabeled dialogs but the pool is empty");
  if (lab.empty()) throw ConfigError("ratio " + ratio.str() + " needs labeled dialogs but the pool is empty");
  std::vector<std::string> unl = unlabeled_ids;
  std::shuffle(unl.begin(), unl.end(), rng);
  std::shuffle(lab.begin(), lab.end(), rng);
  std::size_t next_lab = 0;
  out.reserve(unl.size() + unl.size() * ratio.labeled / ratio.unlabeled + ratio.labeled);
  for (std::size_t u = 0; u < unl.size();) {
    for (std::size_t i = 0; i < ratio.unlabeled && u < unl.size(); ++i) out.push_back(unl[u++]);
    for (std::size_t i = 0; i < ratio.labeled; ++i) {
      if (next_lab == lab.size()) {
        std::shuffle(lab.begin(), lab.end(), rng);
        next_lab = 0;
      }
      out.push_back(lab[next_lab++]);
    }
  }
  return out;
}

Corpus select_unlabeled(const Corpus& unlabeled, std::size_t labeled_count, Ratio ratio) {
  const std::size_t want = (labeled_count * ratio.unlabeled + ratio.labeled / 2) / ratio.labeled;
  Corpus out;
  out.vocab = unlabeled.vocab;
  const std::size_t n = std::min(want, unlabeled.dialogs.size());
  out.dialogs.assign(unlabeled.dialogs.begin(), unlabeled.dialogs.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

ObjectiveAccumulators accumulate_turn(const Model& model, const TurnView& turn, const LatentState& h, double scale,
                                      GradientBuffers& grads, bool update_retriever) {
  ObjectiveAccumulators acc;
  const KnowledgeBase& kb = *turn.kb;
  if (update_retriever)
    acc.j_theta += model.theta.retriever.accumulate_gradient(turn.context, turn.user, h.mask, kb, scale,
                                                             grads.retriever);
  else
    acc.j_theta += model.theta.retriever.xi_log_prob(turn.context, turn.user, h.mask, kb);
  const Tokens xi = serialize_xi(h.mask, kb);
  acc.j_theta += model.theta.generator.accumulate_gradient(generator_condition(turn.context, turn.user, xi),
                                                           generator_target(h.act, turn.response), scale,
                                                           grads.generator);
  acc.j_phi += model.phi.inference.accumulate_gradient(inference_condition(turn.context, turn.user, turn.response),
                                                       inference_target(xi, h.act), scale, grads.inference);
  return acc;
}

namespace {

LatentState gold_latent(const Turn& turn) { return {*turn.gold_xi, with_eos(*turn.gold_act)}; }

void check_labeled(const Corpus& labeled) {
  for (const auto& d : labeled.dialogs)
    if (!d.labeled) throw ConfigError("dialog " + d.id + " in the labeled pool has no labels");
}

void check_unlabeled(const Corpus& unlabeled) {
  for (const auto& d : unlabeled.dialogs)
    if (d.labeled) throw ConfigError("dialog " + d.id + " in the unlabeled pool carries labels");
}

void apply(Model& model, GradientBuffers& g, const TrainConfig& cfg) {
  if (!g.retriever.empty()) model.theta.retriever.apply(g.retriever, cfg.retriever_rate());
  model.theta.generator.apply(g.generator, cfg.generator_rate());
  model.phi.inference.apply(g.inference, cfg.inference_rate());
}

std::vector<std::optional<LatentState>> pseudo_labels(const Model& model, const Dialog& dialog,
                                                      const SamplerConfig& sc) {
  std::vector<std::optional<LatentState>> out;
  for (std::size_t t = 1; t <= dialog.turns.size(); ++t) {
    const Tokens context = build_context(dialog, t);
    const Turn& turn = dialog.turns[t - 1];
    const Tokens out_tokens = model.phi.inference.greedy(inference_condition(context, turn.user, turn.response),
                                                         inference_max_len(dialog.kb, sc.max_act_len));
    out.push_back(parse_inference_output(out_tokens, dialog.kb, sc.max_act_len));
  }
  return out;
}

EvalReport score(const Model& model, const Corpus& corpus, double threshold, std::uint64_t seed) {
  return evaluate_predictions(run_corpus(model, corpus, threshold, DecodeMode::kGreedy, seed), corpus);
}

Model run_phase(const Corpus& labeled, const Corpus* unlabeled, const TrainConfig& cfg, Model model, Method method,
                const std::string& phase, std::size_t epochs, const TrainHooks& hooks) {
  cfg.check();
  if (labeled.dialogs.empty()) throw ConfigError("training needs at least one labeled dialog");
  check_labeled(labeled);
  std::unordered_map<std::string, const Dialog*> by_id;
  std::vector<std::string> labeled_ids, unlabeled_ids;
  for (const auto& d : labeled.dialogs) {
    labeled_ids.push_back(d.id);
    by_id.emplace(d.id, &d);
  }
  const bool semi = unlabeled && !unlabeled->dialogs.empty() && method != Method::kSupervised;
  if (semi) {
    check_unlabeled(*unlabeled);
    for (const auto& d : unlabeled->dialogs) {
      unlabeled_ids.push_back(d.id);
      if (!by_id.emplace(d.id, &d).second) throw ConfigError("dialog id " + d.id + " appears twice");
    }
  }
  const Ratio ratio = semi ? cfg.ratio : Ratio{0, 1};
  const SamplerConfig sc = cfg.sampler_config();
  LatentCache cache;

  std::optional<Model> best;
  double best_combined = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, phase, {epoch}));
    const auto stream = mix_batches(labeled_ids, unlabeled_ids, ratio, rng);
    EpochReport report;
    report.phase = phase;
    report.epoch = epoch;
    GradientBuffers grads;
    const double scale = 1.0 / static_cast<double>(cfg.batch_size);
    std::size_t in_batch = 0;
    for (const auto& id : stream) {
      const Dialog& dialog = *by_id.at(id);
      auto add = [&](const ObjectiveAccumulators& a) {
        report.objective.j_theta += a.j_theta;
        report.objective.j_phi += a.j_phi;
      };
      if (dialog.labeled) {
        for (std::size_t t = 1; t <= dialog.turns.size(); ++t) {
          const Tokens context = build_context(dialog, t);
          const Turn& turn = dialog.turns[t - 1];
          const TurnView view{context, turn.user, turn.response, &dialog.kb};
          add(accumulate_turn(model, view, gold_latent(turn), scale, grads, true));
        }
      } else {
        std::vector<std::optional<LatentState>> latents;
        if (method == Method::kJsa) {
          Rng drng = dialog_rng(cfg.seed, dialog.id, epoch);
          latents = sample_dialog_latents(model.theta, model.phi, dialog, cache, drng, sc, &report.sampler);
        } else {
          latents = pseudo_labels(model, dialog, sc);
        }
        if (hooks.on_latents) hooks.on_latents(dialog, epoch, latents);
        for (std::size_t t = 1; t <= dialog.turns.size(); ++t) {
          if (!latents[t - 1]) {
            ++report.skipped_turns;
            continue;
          }
          const Tokens context = build_context(dialog, t);
          const Turn& turn = dialog.turns[t - 1];
          const TurnView view{context, turn.user, turn.response, &dialog.kb};
          add(accumulate_turn(model, view, *latents[t - 1], scale, grads, false));
        }
      }
      ++report.dialogs;
      if (++in_batch == cfg.batch_size) {
        apply(model, grads, cfg);
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      const double fix = static_cast<double>(cfg.batch_size) / static_cast<double>(in_batch);
      grads.retriever.scale(fix);
      grads.generator.scale(fix);
      grads.inference.scale(fix);
      apply(model, grads, cfg);
    }
    if (!std::isfinite(report.objective.j_theta) || !std::isfinite(report.objective.j_phi))
      throw NumericError(phase + " epoch " + std::to_string(epoch) + " produced a non-finite objective");

    bool stop = false;
    if (hooks.dev) {
      report.dev = score(model, *hooks.dev, cfg.threshold, cfg.seed);
      if (report.dev->combined > best_combined) {
        best_combined = report.dev->combined;
        best = model;
        stale = 0;
      } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
        stop = true;
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(report);
    if (stop) break;
  }
  return best ? std::move(*best) : std::move(model);
}

}  // namespace

ObjectiveAccumulators compute_objectives(const Model& model, const Corpus& labeled) {
  check_labeled(labeled);
  ObjectiveAccumulators acc;
  for (const auto& dialog : labeled.dialogs) {
    for (std::size_t t = 1; t <= dialog.turns.size(); ++t) {
      const Tokens context = build_context(dialog, t);
      const Turn& turn = dialog.turns[t - 1];
      const LatentState h = gold_latent(turn);
      acc.j_theta += joint_log_prob(model.theta, context, turn.user, turn.response, dialog.kb, h);
      acc.j_phi += proposal_log_prob(model.phi, context, turn.user, turn.response, dialog.kb, h);
    }
  }
  return acc;
}

Model initial_model(const TrainConfig& config, std::size_t vocab_size) {
  config.check();
  return Model(config.model_config(), vocab_size);
}

Model supervised_pretrain(const Corpus& labeled, const TrainConfig& config, const TrainHooks& hooks) {
  return run_phase(labeled, nullptr, config, initial_model(config, labeled.vocab.size()), Method::kSupervised,
                   "pretrain", config.pretrain_epochs, hooks);
}

Model supervised_continue(const Corpus& labeled, const TrainConfig& config, Model start, const TrainHooks& hooks) {
  return run_phase(labeled, nullptr, config, std::move(start), Method::kSupervised, "semi", config.semi_epochs,
                   hooks);
}

Model jsa_train(const Corpus& labeled, const Corpus& unlabeled, const TrainConfig& config, Model pretrained,
                const TrainHooks& hooks) {
  return run_phase(labeled, &unlabeled, config, std::move(pretrained), Method::kJsa, "semi", config.semi_epochs,
                   hooks);
}

Model pl_train(const Corpus& labeled, const Corpus& unlabeled, const TrainConfig& config, Model pretrained,
               const TrainHooks& hooks) {
  return run_phase(labeled, &unlabeled, config, std::move(pretrained), Method::kPl, "semi", config.semi_epochs,
                   hooks);
}

Model semi_train(const Corpus& labeled, const Corpus& unlabeled, const TrainConfig& config, Model pretrained,
                 const TrainHooks& hooks) {
  switch (config.method) {
    case Method::kJsa: return jsa_train(labeled, unlabeled, config, std::move(pretrained), hooks);
    case Method::kPl: return pl_train(labeled, unlabeled, config, std::move(pretrained), hooks);
    case Method::kSupervised: break;
  }
  return supervised_continue(labeled, config, std::move(pretrained), hooks);
}

std::vector<SweepRow> run_ratio_sweep(const Corpus& labeled, const Corpus& unlabeled, const Corpus& test,
                                      const TrainConfig& config, const SweepOptions& options,
                                      const TrainHooks& hooks) {
  const Model pretrained = supervised_pretrain(labeled, config, hooks);
  std::vector<SweepRow> rows;
  for (const Ratio& ratio : options.ratios) {
    TrainConfig cfg = config;
    cfg.ratio = ratio;
    const Corpus pool = select_unlabeled(unlabeled, labeled.dialogs.size(), ratio);
    SweepRow jsa{Method::kJsa, ratio, {}, std::nullopt};
    SweepRow pl{Method::kPl, ratio, {}, std::nullopt};
    const Model jsa_model = jsa_train(labeled, pool, cfg, pretrained, hooks);
    jsa.report = evaluate_predictions(
        run_corpus(jsa_model, test, cfg.threshold, DecodeMode::kGreedy, options.test_seed, options.threads), test);
    const Model pl_model = pl_train(labeled, pool, cfg, pretrained, hooks);
    pl.report = evaluate_predictions(
        run_corpus(pl_model, test, cfg.threshold, DecodeMode::kGreedy, options.test_seed, options.threads), test);
    const double p = matched_pairs_test(per_dialog_combined(jsa.report), per_dialog_combined(pl.report),
                                        options.permutations, derive_seed(options.test_seed, ratio.str()));
    jsa.p_value = p;
    pl.p_value = p;
    jsa.report.p_value = p;
    pl.report.p_value = p;
    for (auto* row : {&jsa, &pl}) {
      if (options.on_row) options.on_row(*row);
      rows.push_back(*row);
    }
  }
  return rows;
}

}  // namespace krtod
