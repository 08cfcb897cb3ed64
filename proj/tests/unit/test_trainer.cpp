#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"
#include "krtod/oracle.hpp"
#include "krtod/synthetic.hpp"
#include "krtod/trainer.hpp"
#include "test_support.hpp"

namespace krtod {
namespace {

std::vector<std::string> ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

TEST(MixBatches, SupervisedStreamIsPermutation) {
  Rng rng(1);
  const auto lab = ids("l", 50);
  auto s = mix_batches(lab, {}, Ratio{0, 1}, rng);
  EXPECT_NE(s, lab);
  std::sort(s.begin(), s.end());
  auto sorted = lab;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(s, sorted);
}

TEST(MixBatches, TwoToOnePattern) {
  Rng rng(2);
  const auto lab = ids("l", 100), unl = ids("u", 200);
  const auto s = mix_batches(lab, unl, Ratio{2, 1}, rng);
  ASSERT_EQ(s.size(), 300u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i][0], i % 3 == 2 ? 'l' : 'u') << i;
  EXPECT_EQ(std::set<std::string>(s.begin(), s.end()).size(), 300u);
}

TEST(MixBatches, LabeledPoolCycles) {
  Rng rng(3);
  const auto s = mix_batches(ids("l", 3), ids("u", 40), Ratio{4, 1}, rng);
  std::map<std::string, int> seen;
  for (const auto& id : s) ++seen[id];
  EXPECT_EQ(seen.size(), 43u);
  for (int i = 0; i < 3; ++i) EXPECT_GE(seen["l" + std::to_string(i)], 3);
}

TEST(MixBatches, DeterministicAndValidated) {
  Rng a(7), b(7);
  EXPECT_EQ(mix_batches(ids("l", 10), ids("u", 30), Ratio{9, 1}, a),
            mix_batches(ids("l", 10), ids("u", 30), Ratio{9, 1}, b));
  EXPECT_THROW(mix_batches(ids("l", 10), {}, Ratio{9, 1}, a), ConfigError);
  EXPECT_THROW(mix_batches({}, ids("u", 3), Ratio{9, 1}, a), ConfigError);
  EXPECT_THROW(mix_batches(ids("l", 3), ids("u", 3), Ratio{1, 0}, a), ConfigError);
}

TEST(Ratios, ParseAndPrint) {
  EXPECT_EQ(Ratio::parse("9:1"), (Ratio{9, 1}));
  EXPECT_EQ(Ratio::parse("4:1").str(), "4:1");
  for (const char* bad : {"9-1", "1:0", ":1", "a:b", "9:1:1", "-1:1"}) EXPECT_THROW(Ratio::parse(bad), ConfigError) << bad;
}

TEST(TrainConfigFile, RoundTripAndErrors) {
  TrainConfig c;
  c.method = Method::kPl;
  c.backend = Backend::kTabular;
  c.lr_generator = 0.25;
  c.ratio = {4, 1};
  c.copy_inference = false;
  c.patience = 2;
  const TrainConfig back = parse_train_config(format_train_config(c));
  EXPECT_EQ(format_train_config(back), format_train_config(c));
  EXPECT_EQ(back.generator_rate(), 0.25);
  EXPECT_EQ(back.retriever_rate(), default_learning_rate(Backend::kTabular));
  EXPECT_THROW(parse_train_config("lr_everything = 1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("batch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_train_config("method = em\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lr_generator = -1\n"), ConfigError);
}

TEST(SelectUnlabeled, TakesRatioShare) {
  CorpusConfig cc;
  cc.dialogs = 50;
  cc.labeled_fraction = 0.0;
  const Corpus pool = generate_synthetic_corpus(cc, 1);
  EXPECT_EQ(select_unlabeled(pool, 10, Ratio{2, 1}).dialogs.size(), 20u);
  EXPECT_EQ(select_unlabeled(pool, 10, Ratio{9, 1}).dialogs.size(), 50u);
  EXPECT_EQ(select_unlabeled(pool, 10, Ratio{2, 1}).dialogs[3], pool.dialogs[3]);
}

class TinyTraining : public ::testing::Test {
 protected:
  Corpus labeled, unlabeled;
  TrainConfig cfg;
  void SetUp() override {
    CorpusConfig cc;
    cc.dialogs = 24;
    cc.vocab_size = 60;
    cc.labeled_fraction = 0.5;
    cc.max_turns = 3;
    const Corpus all = generate_synthetic_corpus(cc, 5);
    labeled = labeled_part(all);
    unlabeled = unlabeled_part(all);
    cfg.dim = 256;
    cfg.lr_retriever = cfg.lr_generator = cfg.lr_inference = 0.2;
    cfg.pretrain_epochs = 2;
    cfg.semi_epochs = 2;
    cfg.ratio = {1, 1};
    cfg.max_response_len = 24;
  }
};

TEST_F(TinyTraining, ZeroRateChangesNothing) {
  TrainConfig c = cfg;
  c.lr_retriever = c.lr_generator = c.lr_inference = 0.0;
  const Model init = initial_model(c, labeled.vocab.size());
  EXPECT_EQ(supervised_pretrain(labeled, c), init);
  EXPECT_EQ(jsa_train(labeled, unlabeled, c, init), init);
  EXPECT_EQ(pl_train(labeled, unlabeled, c, init), init);
}

TEST_F(TinyTraining, FullBatchLikelihoodIsMonotone) {
  TrainConfig c = cfg;
  c.batch_size = labeled.dialogs.size();
  c.lr_retriever = c.lr_generator = c.lr_inference = 0.02;
  double prev_theta = -std::numeric_limits<double>::infinity();
  double prev_phi = prev_theta;
  for (std::size_t epochs = 0; epochs <= 5; ++epochs) {
    c.pretrain_epochs = epochs;
    const auto j = compute_objectives(
        epochs == 0 ? initial_model(c, labeled.vocab.size()) : supervised_pretrain(labeled, c), labeled);
    EXPECT_GE(j.j_theta, prev_theta);
    EXPECT_GE(j.j_phi, prev_phi);
    prev_theta = j.j_theta;
    prev_phi = j.j_phi;
  }
}

TEST_F(TinyTraining, ObjectivesAreSumsOfLogProbs) {
  const Model m = supervised_pretrain(labeled, cfg);
  const auto a = compute_objectives(m, labeled);
  EXPECT_EQ(a.j_theta, compute_objectives(m, labeled).j_theta);
  double theta = 0.0, phi = 0.0;
  for (const auto& d : labeled.dialogs)
    for (std::size_t t = 1; t <= d.turns.size(); ++t) {
      const Tokens ctx = build_context(d, t);
      const Turn& turn = d.turns[t - 1];
      const LatentState h{*turn.gold_xi, with_eos(*turn.gold_act)};
      const Tokens xi = serialize_xi(h.mask, d.kb);
      theta += m.theta.retriever.xi_log_prob(ctx, turn.user, h.mask, d.kb) +
               m.theta.generator.log_prob(generator_condition(ctx, turn.user, xi), generator_target(h.act, turn.response));
      phi += m.phi.inference.log_prob(inference_condition(ctx, turn.user, turn.response), inference_target(xi, h.act));
    }
  EXPECT_NEAR(a.j_theta, theta, 1e-9);
  EXPECT_NEAR(a.j_phi, phi, 1e-9);
}

TEST_F(TinyTraining, EmptyUnlabeledPoolIsSupervisedContinuation) {
  const Model start = supervised_pretrain(labeled, cfg);
  Corpus none;
  none.vocab = labeled.vocab;
  EXPECT_EQ(jsa_train(labeled, none, cfg, start), supervised_continue(labeled, cfg, start));
  EXPECT_EQ(pl_train(labeled, none, cfg, start), supervised_continue(labeled, cfg, start));
}

TEST_F(TinyTraining, SameSeedSameModel) {
  const Model start = supervised_pretrain(labeled, cfg);
  EXPECT_EQ(jsa_train(labeled, unlabeled, cfg, start), jsa_train(labeled, unlabeled, cfg, start));
  TrainConfig other = cfg;
  other.seed = 2;
  EXPECT_NE(jsa_train(labeled, unlabeled, other, start), jsa_train(labeled, unlabeled, cfg, start));
}

TEST_F(TinyTraining, PoolsAreChecked) {
  Corpus empty;
  empty.vocab = labeled.vocab;
  EXPECT_THROW(supervised_pretrain(empty, cfg), ConfigError);
  EXPECT_THROW(supervised_pretrain(unlabeled, cfg), ConfigError);
  const Model start = initial_model(cfg, labeled.vocab.size());
  EXPECT_THROW(jsa_train(labeled, labeled, cfg, start), ConfigError);
}

TEST_F(TinyTraining, UnlabeledTurnsLeaveRetrieverAlone) {
  const Model m = supervised_pretrain(labeled, cfg);
  const Dialog& d = unlabeled.dialogs[0];
  GradientBuffers g;
  for (std::size_t t = 1; t <= d.turns.size(); ++t) {
    const Tokens ctx = build_context(d, t);
    const TurnView view{ctx, d.turns[t - 1].user, d.turns[t - 1].response, &d.kb};
    const LatentState h{KbMask(d.kb.size(), 1), {tok::kFirstContent, tok::kEos}};
    accumulate_turn(m, view, h, 1.0, g, false);
  }
  EXPECT_TRUE(g.retriever.empty());
  EXPECT_FALSE(g.generator.empty());
  EXPECT_FALSE(g.inference.empty());
}

TEST_F(TinyTraining, RetrieverFollowsOnlyLabeledDialogs) {
  // With batch size 1 the retriever after a semi-supervised phase must equal
  // the retriever trained on the labeled dialogs of the same stream alone.
  const Model start = supervised_pretrain(labeled, cfg);
  for (Method method : {Method::kJsa, Method::kPl}) {
    const Model trained = method == Method::kJsa ? jsa_train(labeled, unlabeled, cfg, start)
                                                 : pl_train(labeled, unlabeled, cfg, start);
    Retriever expected = start.theta.retriever;
    std::map<std::string, const Dialog*> by_id;
    std::vector<std::string> lab_ids, unl_ids;
    for (const auto& d : labeled.dialogs) {
      by_id[d.id] = &d;
      lab_ids.push_back(d.id);
    }
    for (const auto& d : unlabeled.dialogs) unl_ids.push_back(d.id);
    for (std::size_t epoch = 1; epoch <= cfg.semi_epochs; ++epoch) {
      Rng rng(derive_seed(cfg.seed, "semi", {epoch}));
      for (const auto& id : mix_batches(lab_ids, unl_ids, cfg.ratio, rng)) {
        auto it = by_id.find(id);
        if (it == by_id.end()) continue;
        const Dialog& d = *it->second;
        RetrieverGradient g;
        for (std::size_t t = 1; t <= d.turns.size(); ++t)
          expected.accumulate_gradient(build_context(d, t), d.turns[t - 1].user, *d.turns[t - 1].gold_xi, d.kb, 1.0, g);
        expected.apply(g, cfg.retriever_rate());
      }
    }
    EXPECT_EQ(trained.theta.retriever, expected) << to_string(method);
    EXPECT_NE(trained.theta.generator, start.theta.generator);
  }
}

TEST(DeterministicProposal, JsaAndPseudoLabelsAgree) {
  CorpusConfig cc;
  cc.dialogs = 12;
  cc.vocab_size = 60;
  cc.labeled_fraction = 0.5;
  cc.max_turns = 2;
  const Corpus all = generate_synthetic_corpus(cc, 8);
  const Corpus labeled = labeled_part(all), unlabeled = unlabeled_part(all);
  TrainConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.order = 256;
  cfg.semi_epochs = 3;
  cfg.ratio = {1, 1};
  cfg.lr_inference = 0.0;
  cfg.lr_generator = 0.1;
  cfg.lr_retriever = 0.1;
  // q maps every unlabeled turn to one fixed latent state.
  Model start = initial_model(cfg, labeled.vocab.size());
  for (const auto& d : unlabeled.dialogs)
    for (std::size_t t = 1; t <= d.turns.size(); ++t) {
      const Turn& turn = d.turns[t - 1];
      KbMask mask(d.kb.size(), 0);
      mask[t % d.kb.size()] = 1;
      const Tokens act{static_cast<TokenId>(tok::kFirstContent + t), tok::kEos};
      fit_table(start.phi.inference, inference_condition(build_context(d, t), turn.user, turn.response),
                {{inference_target(serialize_xi(mask, d.kb), act), 1.0}});
    }
  using Record = std::map<std::pair<std::string, std::size_t>, std::vector<std::optional<LatentState>>>;
  auto record = [](Record& r) {
    TrainHooks h;
    h.on_latents = [&r](const Dialog& d, std::size_t epoch, const std::vector<std::optional<LatentState>>& l) {
      r[{d.id, epoch}] = l;
    };
    return h;
  };
  Record jsa, pl;
  const Model a = jsa_train(labeled, unlabeled, cfg, start, record(jsa));
  const Model b = pl_train(labeled, unlabeled, cfg, start, record(pl));
  EXPECT_EQ(jsa.size(), unlabeled.dialogs.size() * cfg.semi_epochs);
  EXPECT_EQ(jsa, pl);
  for (const auto& [key, latents] : jsa)
    for (const auto& h : latents) EXPECT_TRUE(h);
  EXPECT_EQ(a, b);
}

TEST_F(TinyTraining, EarlyStoppingKeepsBestDevModel) {
  TrainConfig c = cfg;
  c.pretrain_epochs = 6;
  c.patience = 2;
  std::vector<double> scores;
  TrainHooks hooks;
  hooks.dev = &labeled;
  hooks.on_epoch = [&](const EpochReport& r) { scores.push_back(r.dev->combined); };
  const Model m = supervised_pretrain(labeled, c, hooks);
  ASSERT_FALSE(scores.empty());
  const double best = *std::max_element(scores.begin(), scores.end());
  const auto report = evaluate_predictions(run_corpus(m, labeled, c.threshold, DecodeMode::kGreedy, c.seed), labeled);
  EXPECT_DOUBLE_EQ(report.combined, best);
}

TEST_F(TinyTraining, PartialFinalBatchIsRescaled) {
  // Two dialogs in a batch of four: the update must match one batch of two.
  Corpus two;
  two.vocab = labeled.vocab;
  two.dialogs.assign(labeled.dialogs.begin(), labeled.dialogs.begin() + 2);
  TrainConfig four = cfg, exact = cfg;
  four.pretrain_epochs = exact.pretrain_epochs = 1;
  four.batch_size = 4;
  exact.batch_size = 2;
  const Model a = supervised_pretrain(two, four);
  const Model b = supervised_pretrain(two, exact);
  ASSERT_EQ(a.theta.generator.weights().size(), b.theta.generator.weights().size());
  for (std::size_t i = 0; i < a.theta.generator.weights().size(); ++i)
    ASSERT_NEAR(a.theta.generator.weights()[i], b.theta.generator.weights()[i], 1e-12);
  EXPECT_NEAR(a.theta.retriever.bias(), b.theta.retriever.bias(), 1e-12);
}

}  // namespace
}  // namespace krtod
