#include "cli.hpp"

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "krtod/corpus_io.hpp"
#include "krtod/decode.hpp"
#include "krtod/errors.hpp"
#include "krtod/hash.hpp"
#include "krtod/keyvalue.hpp"
#include "krtod/metrics.hpp"
#include "krtod/oracle.hpp"
#include "krtod/synthetic.hpp"
#include "krtod/trainer.hpp"
#include "manifest.hpp"

namespace krtod::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string version_string() {
  std::ostringstream s;
  s << "krtod " << KRTOD_VERSION << " (" << KRTOD_BUILD_TYPE << ", C++" << __cplusplus / 100 % 100 << ", "
#if defined(__clang__)
    << "clang " << __clang_major__ << "." << __clang_minor__
#elif defined(__GNUC__)
    << "gcc " << __GNUC__ << "." << __GNUC_MINOR__
#else
    << "unknown compiler"
#endif
    << ")";
  return s.str();
}

namespace {

struct Options {
  std::size_t threads = 1;
  // gen-data
  std::string corpus_config, out_dir;
  std::size_t dev_count = 100, test_count = 200;
  std::optional<std::uint64_t> seed;
  // train
  std::string method, ratio, train_config, labeled, unlabeled, dev, out, init;
  // decode
  std::string ckpt, corpus, mode = "greedy";
  std::optional<double> threshold;
  // eval / compare
  std::string pred, gold, pred_a, pred_b;
  std::size_t permutations = 10000;
  // sweep
  std::string test, ratios = "1:1,2:1,4:1,9:1";
  // sampler-diag
  std::size_t instances = 10, steps = 20000, kb = 2, words = 3, act_len = 1;
  double mix = 0.5, invalid = 0.1;
};

std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string epoch_line(const EpochReport& r) {
  std::ostringstream s;
  s << "phase=" << r.phase << " epoch=" << r.epoch << " J_theta=" << fmt(r.objective.j_theta, 8)
    << " J_phi=" << fmt(r.objective.j_phi, 8);
  if (r.dev) {
    s << " dev_success=" << format_success(r.dev->success) << " dev_bleu4=" << format_bleu(r.dev->bleu4)
      << " dev_combined=" << format_combined(r.dev->combined);
  } else {
    s << " dev_success=- dev_bleu4=- dev_combined=-";
  }
  if (r.sampler.proposals) s << " acceptance=" << fmt(r.sampler.acceptance_rate(), 4);
  else s << " acceptance=-";
  if (r.skipped_turns) s << " skipped_turns=" << r.skipped_turns;
  return s.str();
}

ojson train_config_json(const TrainConfig& c) {
  ojson j = ojson::object();
  for (const auto& kv : parse_key_values(format_train_config(c))) j[kv.key] = kv.value;
  return j;
}

ojson corpus_config_json(const CorpusConfig& c) {
  ojson j = ojson::object();
  for (const auto& kv : parse_key_values(format_corpus_config(c))) j[kv.key] = kv.value;
  return j;
}

// ---- subcommands ----

int gen_data(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("gen-data", args);
  CorpusConfig cfg = load_corpus_config(o.corpus_config);
  if (o.seed) cfg.seed = *o.seed;
  manifest.add_input(o.corpus_config);
  manifest.set_seed(cfg.seed);
  manifest.set_config(corpus_config_json(cfg));
  fs::create_directories(o.out_dir);
  const SyntheticDomain domain(cfg);
  const Corpus train = domain.generate(cfg.dialogs, cfg.labeled_fraction, cfg.seed, "train", "dlg");
  auto emit = [&](const Corpus& c, const std::string& name) {
    const std::string path = (fs::path(o.out_dir) / name).string();
    save_corpus(c, path);
    manifest.add_output(path);
    manifest.add_output(vocabulary_path(path));
    out << name << ": " << c.dialogs.size() << " dialogs, " << c.turn_count() << " turns\n";
  };
  emit(labeled_part(train), "labeled.jsonl");
  emit(unlabeled_part(train), "unlabeled.jsonl");
  emit(domain.generate(o.dev_count, 1.0, cfg.seed, "dev", "dev"), "dev.jsonl");
  emit(domain.generate(o.test_count, 1.0, cfg.seed, "test", "test"), "test.jsonl");
  const std::string cfg_copy = (fs::path(o.out_dir) / "corpus.cfg").string();
  save_corpus_config(cfg, cfg_copy);
  manifest.add_output(cfg_copy);
  manifest.write((fs::path(o.out_dir) / "gen-data.manifest.json").string());
  return kOk;
}

TrainConfig resolve_train_config(const Options& o) {
  TrainConfig cfg = o.train_config.empty() ? TrainConfig{} : load_train_config(o.train_config);
  if (!o.method.empty()) cfg.method = method_from_string(o.method);
  if (!o.ratio.empty()) cfg.ratio = Ratio::parse(o.ratio);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threshold) cfg.threshold = *o.threshold;
  cfg.check();
  return cfg;
}

int train(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("train", args);
  const TrainConfig cfg = resolve_train_config(o);
  manifest.set_seed(cfg.seed);
  manifest.set_config(train_config_json(cfg));
  if (!o.train_config.empty()) manifest.add_input(o.train_config);

  const Corpus labeled = load_corpus(o.labeled);
  manifest.add_input(o.labeled);
  std::optional<Corpus> dev;
  if (!o.dev.empty()) {
    dev = load_corpus(o.dev);
    manifest.add_input(o.dev);
  }
  Corpus unlabeled;
  unlabeled.vocab = labeled.vocab;
  if (cfg.method != Method::kSupervised) {
    if (o.unlabeled.empty()) throw ConfigError("--unlabeled is required for method " + to_string(cfg.method));
    const Corpus pool = load_corpus(o.unlabeled);
    manifest.add_input(o.unlabeled);
    if (!(pool.vocab == labeled.vocab)) throw DomainError("labeled and unlabeled vocabularies differ");
    unlabeled = select_unlabeled(pool, labeled.dialogs.size(), cfg.ratio);
  }
  if (dev && !(dev->vocab == labeled.vocab)) throw DomainError("dev vocabulary differs from the training data");

  TrainHooks hooks;
  hooks.dev = dev ? &*dev : nullptr;
  hooks.on_epoch = [&](const EpochReport& r) { out << epoch_line(r) << "\n" << std::flush; };

  out << "labeled=" << labeled.dialogs.size() << " unlabeled=" << unlabeled.dialogs.size()
      << " method=" << to_string(cfg.method) << " ratio=" << cfg.ratio.str() << "\n";
  Model model;
  if (!o.init.empty()) {
    model = load_checkpoint(o.init, labeled.vocab);
    manifest.add_input(o.init);
  } else {
    model = supervised_pretrain(labeled, cfg, hooks);
  }
  if (cfg.method != Method::kSupervised) model = semi_train(labeled, unlabeled, cfg, std::move(model), hooks);
  save_checkpoint(model, labeled.vocab, o.out);
  manifest.add_output(o.out);
  manifest.write(manifest_path(o.out));
  return kOk;
}

int decode(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("decode", args);
  const Corpus corpus = load_corpus(o.corpus);
  const Model model = load_checkpoint(o.ckpt, corpus.vocab);
  const double threshold = o.threshold.value_or(model.config.threshold);
  const std::uint64_t seed = o.seed.value_or(1);
  const DecodeMode mode = decode_mode_from_string(o.mode);
  manifest.add_input(o.corpus);
  manifest.add_input(o.ckpt);
  manifest.set_seed(seed);
  manifest.set_config({{"threshold", threshold}, {"mode", o.mode}});
  const auto records = run_corpus(model, corpus, threshold, mode, seed, o.threads);
  save_predictions(records, o.out);
  manifest.add_output(o.out);
  manifest.write(manifest_path(o.out));
  out << "wrote " << records.size() << " predictions to " << o.out << "\n";
  return kOk;
}

void print_report(std::ostream& out, const std::string& label, const EvalReport& r) {
  out << label << "success=" << format_success(r.success) << " bleu4=" << format_bleu(r.bleu4)
      << " combined=" << format_combined(r.combined);
  if (r.p_value) out << " p_value=" << fmt(*r.p_value, 4);
  out << "\n";
}

int eval(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("eval", args);
  const Corpus gold = load_corpus(o.gold);
  const auto report = evaluate_predictions(load_predictions(o.pred), gold);
  manifest.add_input(o.pred);
  manifest.add_input(o.gold);
  print_report(out, "", report);
  if (!o.out.empty()) {
    write_text_file(o.out, report_to_json(report) + "\n");
    manifest.add_output(o.out);
    manifest.write(manifest_path(o.out));
  }
  return kOk;
}

int compare(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("compare", args);
  const Corpus gold = load_corpus(o.gold);
  EvalReport a = evaluate_predictions(load_predictions(o.pred_a), gold);
  EvalReport b = evaluate_predictions(load_predictions(o.pred_b), gold);
  const std::uint64_t seed = o.seed.value_or(1);
  const double p = matched_pairs_test(per_dialog_combined(a), per_dialog_combined(b), o.permutations, seed);
  a.p_value = p;
  b.p_value = p;
  manifest.add_input(o.pred_a);
  manifest.add_input(o.pred_b);
  manifest.add_input(o.gold);
  manifest.set_seed(seed);
  manifest.set_config({{"permutations", o.permutations}});
  print_report(out, "a: ", a);
  print_report(out, "b: ", b);
  out << "p_value=" << fmt(p, 6) << "\n";
  if (!o.out.empty()) {
    ojson j;
    j["a"] = ojson::parse(report_to_json(a));
    j["b"] = ojson::parse(report_to_json(b));
    j["p_value"] = p;
    j["permutations"] = o.permutations;
    write_text_file(o.out, j.dump(2) + "\n");
    manifest.add_output(o.out);
    manifest.write(manifest_path(o.out));
  }
  return kOk;
}

int sweep(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("sweep", args);
  const TrainConfig cfg = resolve_train_config(o);
  const Corpus labeled = load_corpus(o.labeled);
  const Corpus unlabeled = load_corpus(o.unlabeled);
  const Corpus test = load_corpus(o.test);
  for (const auto& p : {o.labeled, o.unlabeled, o.test}) manifest.add_input(p);
  if (!o.train_config.empty()) manifest.add_input(o.train_config);
  manifest.set_seed(cfg.seed);
  manifest.set_config(train_config_json(cfg));

  SweepOptions opts;
  opts.ratios.clear();
  std::stringstream list(o.ratios);
  for (std::string item; std::getline(list, item, ',');) opts.ratios.push_back(Ratio::parse(item));
  opts.permutations = o.permutations;
  opts.threads = o.threads;
  opts.on_row = [&](const SweepRow& r) {
    out << "method=" << to_string(r.method) << " ratio=" << r.ratio.str() << " success="
        << format_success(r.report.success) << " bleu4=" << format_bleu(r.report.bleu4)
        << " combined=" << format_combined(r.report.combined) << " p_value=" << fmt(r.p_value.value_or(1.0), 4)
        << "\n"
        << std::flush;
  };
  std::optional<Corpus> dev;
  TrainHooks hooks;
  if (!o.dev.empty()) {
    dev = load_corpus(o.dev);
    hooks.dev = &*dev;
    manifest.add_input(o.dev);
  }
  const auto rows = run_ratio_sweep(labeled, unlabeled, test, cfg, opts, hooks);
  ojson table = ojson::array();
  for (const auto& r : rows)
    table.push_back({{"method", to_string(r.method)},
                     {"ratio", r.ratio.str()},
                     {"success", r.report.success},
                     {"bleu4", r.report.bleu4},
                     {"combined", r.report.combined},
                     {"p_value", r.p_value.value_or(1.0)}});
  write_text_file(o.out, table.dump(2) + "\n");
  manifest.add_output(o.out);
  manifest.write(manifest_path(o.out));
  return kOk;
}

int sampler_diag(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest("sampler-diag", args);
  const std::uint64_t seed = o.seed.value_or(1);
  manifest.set_seed(seed);
  manifest.set_config({{"instances", o.instances},
                       {"steps", o.steps},
                       {"kb", o.kb},
                       {"words", o.words},
                       {"act_len", o.act_len},
                       {"mix", o.mix},
                       {"invalid", o.invalid}});
  std::ostringstream text;
  double worst_tv = 0.0;
  for (std::size_t i = 0; i < o.instances; ++i) {
    const auto inst = random_tiny_instance(derive_seed(seed, "diag", {i}), o.kb, o.words, o.act_len);
    const TurnView view{inst.context, inst.user, inst.response, &inst.kb};
    const auto post = exact_posterior(inst.theta, inst.context, inst.user, inst.response, inst.kb, inst.vocab,
                                      inst.max_act_len);
    Rng rng(derive_seed(seed, "diag-chain", {i}));
    SamplerConfig sc;
    sc.max_act_len = inst.max_act_len;
    const Phi noisy = proposal_from_posterior(perturb_posterior(post, o.mix, rng), inst.context, inst.user,
                                              inst.response, inst.kb, inst.vocab.size(), o.invalid);
    const auto run = run_turn_chain(inst.theta, noisy, view, o.steps, rng, sc);
    const Phi exact =
        proposal_from_posterior(post, inst.context, inst.user, inst.response, inst.kb, inst.vocab.size());
    const auto exact_run = run_turn_chain(inst.theta, exact, view, o.steps, rng, sc);
    const double tv = total_variation(run.empirical, post);
    worst_tv = std::max(worst_tv, tv);
    text << "instance = " << i + 1 << "\n"
         << "latent_states = " << post.size() << "\n"
         << "chain_length = " << run.steps << "\n"
         << "proposals = " << run.stats.proposals << "\n"
         << "invalid_proposals = " << run.stats.invalid << "\n"
         << "acceptance_rate = " << fmt(run.stats.acceptance_rate(), 6) << "\n"
         << "tv_distance = " << fmt(tv, 6) << "\n"
         << "exact_proposal_acceptance_rate = " << fmt(exact_run.stats.acceptance_rate(), 6) << "\n"
         << "exact_proposal_tv_distance = " << fmt(total_variation(exact_run.empirical, post), 6) << "\n\n";
  }
  text << "max_tv_distance = " << fmt(worst_tv, 6) << "\n";
  out << text.str();
  if (!o.out.empty()) {
    write_text_file(o.out, text.str());
    manifest.add_output(o.out);
    manifest.write(manifest_path(o.out));
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised retrieval-augmented dialog models with latent knowledge and acts"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "Worker threads for decoding")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus with labeled/unlabeled/dev/test splits");
  gen->add_option("--config", o.corpus_config, "Corpus config (key = value)")->required();
  gen->add_option("--out", o.out_dir, "Output directory")->required();
  gen->add_option("--dev", o.dev_count, "Dev dialogs");
  gen->add_option("--test", o.test_count, "Test dialogs");
  gen->add_option("--seed", o.seed, "Override the config seed");

  auto* tr = app.add_subcommand("train", "Pretrain on labeled data, then optionally run JSA or pseudo-labeling");
  tr->add_option("--method", o.method, "supervised | jsa | pl");
  tr->add_option("--ratio", o.ratio, "Unlabeled:labeled volume, e.g. 9:1");
  tr->add_option("--config", o.train_config, "Training config (key = value)");
  tr->add_option("--labeled", o.labeled, "Labeled corpus")->required();
  tr->add_option("--unlabeled", o.unlabeled, "Unlabeled corpus");
  tr->add_option("--dev", o.dev, "Dev corpus for per-epoch scores and early stopping");
  tr->add_option("--init", o.init, "Start from this checkpoint instead of pretraining");
  tr->add_option("--out", o.out, "Checkpoint path")->required();
  tr->add_option("--seed", o.seed, "Override the config seed");

  auto* dec = app.add_subcommand("decode", "Predict act and response for every turn of a corpus");
  dec->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  dec->add_option("--corpus", o.corpus, "Corpus to decode")->required();
  dec->add_option("--out", o.out, "Predictions file")->required();
  dec->add_option("--mode", o.mode, "greedy | sampled");
  dec->add_option("--threshold", o.threshold, "Retrieval threshold (default: from the checkpoint)");
  dec->add_option("--seed", o.seed, "Seed for sampled decoding");

  auto* ev = app.add_subcommand("eval", "Score predictions: Success, BLEU-4, Combined");
  ev->add_option("--pred", o.pred, "Predictions file")->required();
  ev->add_option("--gold", o.gold, "Gold corpus")->required();
  ev->add_option("--out", o.out, "Report file (JSON)");

  auto* cmp = app.add_subcommand("compare", "Score two prediction files and run the paired significance test");
  cmp->add_option("--pred-a", o.pred_a, "Predictions of system A")->required();
  cmp->add_option("--pred-b", o.pred_b, "Predictions of system B")->required();
  cmp->add_option("--gold", o.gold, "Gold corpus")->required();
  cmp->add_option("--permutations", o.permutations, "Sign-flip resamples (>= 1000)");
  cmp->add_option("--seed", o.seed, "Seed of the resampling");
  cmp->add_option("--out", o.out, "Report file (JSON)");

  auto* sw = app.add_subcommand("sweep", "JSA vs pseudo-labeling over several unlabeled:labeled ratios");
  sw->add_option("--config", o.train_config, "Training config (key = value)");
  sw->add_option("--labeled", o.labeled, "Labeled corpus")->required();
  sw->add_option("--unlabeled", o.unlabeled, "Unlabeled corpus")->required();
  sw->add_option("--test", o.test, "Test corpus")->required();
  sw->add_option("--dev", o.dev, "Dev corpus");
  sw->add_option("--ratios", o.ratios, "Comma-separated U:L list");
  sw->add_option("--permutations", o.permutations, "Sign-flip resamples (>= 1000)");
  sw->add_option("--seed", o.seed, "Override the config seed");
  sw->add_option("--out", o.out, "Result table (JSON)")->required();

  auto* diag = app.add_subcommand("sampler-diag", "Check MIS chains against exact posteriors on tiny problems");
  diag->add_option("--instances", o.instances, "Random instances");
  diag->add_option("--steps", o.steps, "Chain length");
  diag->add_option("--kb", o.kb, "Knowledge entries per instance");
  diag->add_option("--words", o.words, "Content words per instance");
  diag->add_option("--act-len", o.act_len, "Maximum act length");
  diag->add_option("--mix", o.mix, "Weight of the random component in the proposal");
  diag->add_option("--invalid", o.invalid, "Proposal mass on unparseable outputs");
  diag->add_option("--seed", o.seed, "Seed");
  diag->add_option("--out", o.out, "Report file (key = value)");

  std::vector<const char*> argv{"krtod"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(o, args, out);
    if (*tr) return train(o, args, out);
    if (*dec) return decode(o, args, out);
    if (*ev) return eval(o, args, out);
    if (*cmp) return compare(o, args, out);
    if (*sw) return sweep(o, args, out);
    if (*diag) return sampler_diag(o, args, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace krtod::cli
