#include <gtest/gtest.h>

#include "krtod/corpus_io.hpp"
#include "krtod/errors.hpp"
#include "krtod/metrics.hpp"
#include "krtod/synthetic.hpp"

namespace krtod {
namespace {

TEST(Synthetic, SameSeedSameBytes) {
  CorpusConfig cfg;
  cfg.dialogs = 50;
  cfg.noise_rate = 0.2;
  EXPECT_EQ(corpus_to_jsonl(generate_synthetic_corpus(cfg, 7)), corpus_to_jsonl(generate_synthetic_corpus(cfg, 7)));
  EXPECT_NE(corpus_to_jsonl(generate_synthetic_corpus(cfg, 7)), corpus_to_jsonl(generate_synthetic_corpus(cfg, 8)));
}

TEST(Synthetic, GoldResponsesSucceed) {
  for (std::uint64_t seed : {1, 2, 3}) {
    CorpusConfig cfg;
    cfg.dialogs = 100;
    cfg.labeled_fraction = 1.0;
    const Corpus c = generate_synthetic_corpus(cfg, seed);
    validate(c);
    std::vector<std::vector<std::string>> responses;
    for (const auto& d : c.dialogs) {
      auto& r = responses.emplace_back();
      for (const auto& t : d.turns) r.push_back(c.vocab.decode(t.response));
    }
    EXPECT_DOUBLE_EQ(success_rate(responses, c).rate, 100.0);
  }
}

TEST(Synthetic, LabeledShare) {
  CorpusConfig cfg;
  cfg.dialogs = 10000;
  cfg.min_turns = 1;
  cfg.max_turns = 1;
  cfg.labeled_fraction = 0.1;
  const Corpus c = generate_synthetic_corpus(cfg, 1);
  EXPECT_EQ(labeled_part(c).dialogs.size(), 1000u);
  EXPECT_EQ(unlabeled_part(c).dialogs.size(), 9000u);
  for (const auto& d : unlabeled_part(c).dialogs)
    for (const auto& t : d.turns) EXPECT_FALSE(t.labeled());
}

TEST(Synthetic, InvalidConfigs) {
  CorpusConfig cfg;
  cfg.dialogs = 0;
  EXPECT_THROW(cfg.check(), ConfigError);
  cfg = {};
  cfg.vocab_size = 0;
  EXPECT_THROW(SyntheticDomain{cfg}, ConfigError);
  EXPECT_THROW(parse_corpus_config("dialogs = 0\n"), ConfigError);
  EXPECT_THROW(parse_corpus_config("colour = red\n"), ConfigError);
}

TEST(Synthetic, ConfigRoundTrip) {
  CorpusConfig cfg;
  cfg.dialogs = 123;
  cfg.noise_rate = 0.25;
  cfg.seed = 99;
  const CorpusConfig back = parse_corpus_config(format_corpus_config(cfg));
  EXPECT_EQ(back.dialogs, 123u);
  EXPECT_DOUBLE_EQ(back.noise_rate, 0.25);
  EXPECT_EQ(back.seed, 99u);
}

TEST(Synthetic, SplitsShareVocabulary) {
  CorpusConfig cfg;
  const SyntheticDomain domain(cfg);
  const Corpus a = domain.generate(10, 1.0, 1, "dev", "dev");
  const Corpus b = domain.generate(10, 1.0, 1, "test", "test");
  EXPECT_EQ(a.vocab, b.vocab);
  EXPECT_NE(corpus_to_jsonl(a), corpus_to_jsonl(b));
}

}  // namespace
}  // namespace krtod
