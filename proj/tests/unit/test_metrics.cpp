#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "krtod/errors.hpp"
#include "krtod/metrics.hpp"
#include "krtod/synthetic.hpp"
#include "test_support.hpp"

namespace krtod {
namespace {

using Strings = std::vector<std::string>;

// Straight-from-definition corpus BLEU-4 with the same zero-order rule.
double reference_bleu(const Strings& hyps, const Strings& refs) {
  double match[4] = {}, total[4] = {}, hl = 0, rl = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto h = split_words(hyps[s]);
    const auto r = split_words(refs[s]);
    hl += static_cast<double>(h.size());
    rl += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::string, int> hc, rc;
      auto gram = [n](const std::vector<std::string>& w, std::size_t i) {
        std::string g;
        for (std::size_t k = 0; k < n; ++k) g += w[i + k] + "\x1f";
        return g;
      };
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hc[gram(h, i)];
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++rc[gram(r, i)];
      for (const auto& [g, c] : hc) {
        total[n - 1] += c;
        match[n - 1] += std::min(c, rc.count(g) ? rc[g] : 0);
      }
    }
  }
  if (match[0] == 0) return 0.0;
  double lp = 0;
  for (int n = 0; n < 4; ++n) lp += std::log(match[n] > 0 ? match[n] / total[n] : 1.0 / (2.0 * hl)) / 4.0;
  return 100.0 * std::min(1.0, std::exp(1.0 - rl / hl)) * std::exp(lp);
}

const Strings kHyps{"the cat sat on the mat", "a dog runs"};
const Strings kRefs{"the cat is on the mat", "a dog runs fast"};

TEST(Bleu, IdenticalIsHundred) {
  EXPECT_NEAR(bleu4(kRefs, kRefs), 100.0, 1e-12);
  EXPECT_NEAR(smoothed_bleu4(kRefs, kRefs), 100.0, 1e-12);
}

TEST(Bleu, DisjointIsZero) { EXPECT_EQ(bleu4({"x y z w", "q"}, kRefs), 0.0); }

TEST(Bleu, TwoSentenceFixture) {
  // p1 = 8/9, p2 = 5/7, p3 = 2/5, p4 = 0/3 -> 1/18; BP = exp(1 - 10/9).
  const double hand =
      100.0 * std::exp(1.0 - 10.0 / 9.0) *
      std::exp(0.25 * (std::log(8.0 / 9.0) + std::log(5.0 / 7.0) + std::log(2.0 / 5.0) + std::log(1.0 / 18.0)));
  EXPECT_NEAR(hand, 30.840526926560, 1e-9);
  EXPECT_NEAR(bleu4(kHyps, kRefs), hand, 1e-6);
  EXPECT_NEAR(reference_bleu(kHyps, kRefs), hand, 1e-9);
}

TEST(Bleu, ClippingAndBrevity) {
  // "the the the" against "the cat": one clipped unigram match out of three.
  EXPECT_NEAR(bleu4({"the the the the"}, {"the cat sat on"}),
              reference_bleu({"the the the the"}, {"the cat sat on"}), 1e-12);
  EXPECT_LT(bleu4({"a dog"}, {"a dog runs fast"}), bleu4({"a dog runs"}, {"a dog runs fast"}));
}

TEST(Bleu, Errors) {
  EXPECT_THROW(bleu4({}, {}), DomainError);
  EXPECT_THROW(bleu4({"a"}, {"a", "b"}), ShapeError);
}

TEST(Bleu, PairOrderAndRelabelingInvariance) {
  Rng rng(3);
  const Strings words{"a", "b", "c", "d", "e", "f"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 9);
  for (int trial = 0; trial < 50; ++trial) {
    Strings hyps, refs;
    for (int s = 0; s < 5; ++s) {
      std::string h, r;
      for (std::size_t i = len(rng); i > 0; --i) h += words[pick(rng)] + " ";
      for (std::size_t i = len(rng); i > 0; --i) r += words[pick(rng)] + " ";
      hyps.push_back(h);
      refs.push_back(r);
    }
    const double base = bleu4(hyps, refs);
    EXPECT_NEAR(base, reference_bleu(hyps, refs), 1e-9);
    std::vector<std::size_t> order{0, 1, 2, 3, 4};
    std::shuffle(order.begin(), order.end(), rng);
    Strings ph, pr;
    for (auto i : order) {
      ph.push_back(hyps[i]);
      pr.push_back(refs[i]);
    }
    EXPECT_NEAR(bleu4(ph, pr), base, 1e-9);
    auto relabel = [](std::string s) {
      for (auto& c : s)
        if (c >= 'a' && c <= 'f') c = static_cast<char>('u' + (c - 'a'));
      return s;
    };
    Strings rh, rr;
    for (std::size_t i = 0; i < 5; ++i) {
      rh.push_back(relabel(hyps[i]));
      rr.push_back(relabel(refs[i]));
    }
    EXPECT_NEAR(bleu4(rh, rr), base, 1e-9);
  }
}

TEST(Combined, TableValues) {
  EXPECT_NEAR(combined(31.5, 4.170), 39.84, 1e-9);
  EXPECT_NEAR(combined(91.8, 9.677), 111.154, 1e-9);
  EXPECT_EQ(format_combined(combined(31.5, 4.170)), "39.84");
  EXPECT_EQ(format_combined(combined(91.8, 9.677)), "111.15");
  EXPECT_EQ(combined(0, 0), 0.0);
}

TEST(Combined, IsLinear) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng), b = u(rng);
    EXPECT_NEAR(combined(s, b) - combined(s, 0.0), 2.0 * b, 1e-12);
  }
}

TEST(Display, Rounding) {
  EXPECT_EQ(format_success(91.84), "91.8");
  EXPECT_EQ(format_bleu(9.67654), "9.677");
  EXPECT_EQ(format_bleu(30.840527), "30.84");
  EXPECT_EQ(format_bleu(100.0), "100.0");
  EXPECT_EQ(format_bleu(0.0), "0.0");
  EXPECT_EQ(format_combined(111.154), "111.15");
}

class SuccessFixture : public ::testing::Test {
 protected:
  Vocabulary vocab = testing::vocab_with({"hotel", "area", "price", "north", "cheap", "is", "the", "bar", "south",
                                          "west", "end", "ok"});
  Corpus gold;
  void SetUp() override {
    gold.vocab = vocab;
    auto add = [&](const std::string& id, std::vector<std::array<std::string, 3>> kb, std::vector<KbMask> masks) {
      std::vector<std::pair<std::string, std::string>> turns(masks.size(), {"ok", "ok"});
      Dialog d = testing::make_dialog(id, vocab, kb, turns);
      for (std::size_t t = 0; t < masks.size(); ++t) {
        d.turns[t].gold_xi = masks[t];
        d.turns[t].gold_act = vocab.encode("ok");
      }
      d.labeled = true;
      gold.dialogs.push_back(d);
    };
    add("a", {{"hotel", "area", "north"}, {"hotel", "price", "cheap"}}, {{1, 0}, {0, 1}});
    add("b", {{"bar", "area", "west end"}}, {{1}});
    add("c", {{"bar", "area", "south"}}, {{0}, {1}});
  }
};

TEST_F(SuccessFixture, HandCount) {
  // Dialog b misses its two-word value: "west" alone is not the run "west end".
  const std::vector<Strings> responses{{"the area is north", "cheap"}, {"area is west"}, {"ok", "south"}};
  const auto r = success_rate(responses, gold);
  EXPECT_NEAR(r.rate, 66.67, 0.01);
  EXPECT_EQ(r.per_dialog, (std::vector<bool>{true, false, true}));
}

TEST_F(SuccessFixture, EmptyPredictionsFail) {
  const std::vector<Strings> responses{{"", ""}, {""}, {"", ""}};
  EXPECT_EQ(success_rate(responses, gold).rate, 0.0);
}

TEST_F(SuccessFixture, MisalignedPredictions) {
  EXPECT_THROW(success_rate({{"a"}}, gold), ShapeError);
  EXPECT_THROW(success_rate({{"x"}, {"y"}, {"z"}}, gold), ShapeError);
}

TEST_F(SuccessFixture, ReportInvariants) {
  const std::vector<Strings> responses{{"the area is north", "cheap"}, {"area is west"}, {"ok", "south"}};
  const EvalReport r = evaluate(responses, gold);
  EXPECT_DOUBLE_EQ(r.combined, r.success + 2.0 * r.bleu4);
  double mean = 0.0;
  for (const auto& d : r.per_dialog) mean += d.success ? 1.0 : 0.0;
  EXPECT_DOUBLE_EQ(r.success, 100.0 * mean / 3.0);
  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j["per_dialog"].size(), 3u);
  EXPECT_EQ(j["display"]["success"], format_success(r.success));
}

TEST(SuccessOnSynthetic, GoldAgainstGold) {
  CorpusConfig cfg;
  cfg.dialogs = 60;
  cfg.labeled_fraction = 1.0;
  const Corpus c = generate_synthetic_corpus(cfg, 4);
  std::vector<Strings> gold_responses, empty;
  for (const auto& d : c.dialogs) {
    auto& g = gold_responses.emplace_back();
    auto& e = empty.emplace_back();
    for (const auto& t : d.turns) {
      g.push_back(c.vocab.decode(t.response));
      e.push_back("");
    }
  }
  EXPECT_EQ(success_rate(gold_responses, c).rate, 100.0);
  // Every dialog's first turn requests at least one value.
  EXPECT_EQ(success_rate(empty, c).rate, 0.0);
}

TEST(MatchedPairs, IdenticalSystems) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(matched_pairs_test(a, a, 10000, 1), 1.0);
}

TEST(MatchedPairs, UniformShiftIsSignificant) {
  Rng rng(2);
  std::normal_distribution<double> n(150.0, 40.0);
  std::vector<double> b(200), a(200);
  for (std::size_t i = 0; i < 200; ++i) {
    b[i] = n(rng);
    a[i] = b[i] + 10.0;
  }
  EXPECT_LE(matched_pairs_test(a, b, 10000, 3), 0.001);
}

TEST(MatchedPairs, Errors) {
  EXPECT_THROW(matched_pairs_test({1, 2}, {1}, 10000, 1), ShapeError);
  EXPECT_THROW(matched_pairs_test({1}, {1}, 999, 1), ConfigError);
}

TEST(MatchedPairs, SymmetricAndSeeded) {
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(40), b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = n(rng);
    b[i] = n(rng) + 0.2;
  }
  EXPECT_EQ(matched_pairs_test(a, b, 2000, 9), matched_pairs_test(a, b, 2000, 9));
  EXPECT_DOUBLE_EQ(matched_pairs_test(a, b, 2000, 9), matched_pairs_test(b, a, 2000, 9));
}

TEST(MatchedPairs, CalibratedUnderNull) {
  Rng rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::size_t rejections = 0;
  const std::size_t trials = 1000;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> a(50), b(50);
    for (std::size_t i = 0; i < 50; ++i) {
      a[i] = n(rng);
      b[i] = n(rng);
    }
    if (matched_pairs_test(a, b, 1000, t) <= 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / static_cast<double>(trials);
  EXPECT_NEAR(rate, 0.05, 0.02);
}

}  // namespace
}  // namespace krtod
