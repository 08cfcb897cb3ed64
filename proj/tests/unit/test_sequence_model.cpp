#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>

#include "krtod/errors.hpp"
#include "krtod/model.hpp"
#include "krtod/sequence_model.hpp"
#include "test_support.hpp"

namespace krtod {
namespace {

using testing::hashed;
using testing::random_content;
using testing::tabular;

constexpr double kForbidden = -1e4;

// Tabular model over `vocab` tokens with random rows for every reachable key
// and EOS forced at step `max_len`, so the EOS-terminated sequences of length
// <= max_len carry all the mass. The condition is one non-PAD token, which
// makes every key identify its step.
SequenceModel bounded_model(std::size_t vocab, std::size_t max_len, Rng& rng, const Tokens& condition) {
  SequenceModel m(tabular(max_len + 1), vocab);
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<Tokens> prefixes{{}};
  for (std::size_t step = 1; step <= max_len; ++step) {
    std::vector<Tokens> next;
    for (const auto& p : prefixes) {
      Tokens key(max_len + 1, tok::kPad);
      Tokens hist = condition;
      hist.insert(hist.end(), p.begin(), p.end());
      std::copy(hist.begin(), hist.end(), key.end() - static_cast<std::ptrdiff_t>(hist.size()));
      auto& row = m.table()[key];
      row.assign(vocab, 0.0);
      for (auto& z : row) z = step == max_len ? kForbidden : n(rng);
      if (step == max_len) row[tok::kEos] = 0.0;
      for (TokenId v = 0; v < static_cast<TokenId>(vocab); ++v) {
        if (v == tok::kEos) continue;
        Tokens q = p;
        q.push_back(v);
        next.push_back(q);
      }
    }
    prefixes = std::move(next);
  }
  return m;
}

// Every EOS-terminated sequence of at most max_len tokens over `vocab`.
std::vector<Tokens> terminated_sequences(std::size_t vocab, std::size_t max_len) {
  std::vector<Tokens> out;
  std::vector<Tokens> prefixes{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Tokens> next;
    for (const auto& p : prefixes) {
      Tokens done = p;
      done.push_back(tok::kEos);
      out.push_back(done);
      for (TokenId v = 0; v < static_cast<TokenId>(vocab); ++v) {
        if (v == tok::kEos) continue;
        Tokens q = p;
        q.push_back(v);
        next.push_back(q);
      }
    }
    prefixes = std::move(next);
  }
  return out;
}

TEST(SequenceModel, NormalizesOverBoundedSpace) {
  Rng rng(4);
  for (std::size_t vocab : {4, 6, 8}) {
    for (std::size_t max_len : {1, 2, 3, 4}) {
      const Tokens cond{tok::kNull};
      const SequenceModel m = bounded_model(vocab, max_len, rng, cond);
      double total = 0.0;
      for (const auto& s : terminated_sequences(vocab, max_len)) total += std::exp(m.log_prob(cond, s));
      EXPECT_NEAR(total, 1.0, 1e-9) << "vocab " << vocab << " len " << max_len;
    }
  }
}

TEST(SequenceModel, UniformTableScoresLogUniform) {
  const SequenceModel m(tabular(2), 8);
  EXPECT_NEAR(m.log_prob(Tokens{}, Tokens{5, 6, tok::kEos}), 3 * std::log(1.0 / 8.0), 1e-12);
}

TEST(SequenceModel, EosOnlyTarget) {
  Rng rng(9);
  SequenceModel m(hashed(32), 14);
  testing::randomize(m.weights(), rng, 0.5);
  const Tokens cond = random_content(rng, 4, 14);
  EXPECT_NEAR(m.log_prob(cond, Tokens{tok::kEos}), m.next_log_probs(cond, {})[tok::kEos], 1e-12);
}

TEST(SequenceModel, RejectsBadTokens) {
  const SequenceModel m(tabular(2), 8);
  EXPECT_THROW(m.log_prob(Tokens{}, Tokens{8, tok::kEos}), DomainError);
  EXPECT_THROW(m.log_prob(Tokens{-1}, Tokens{tok::kEos}), DomainError);
  EXPECT_THROW(m.log_prob(Tokens{}, Tokens{5}), DomainError);
  Rng rng(1);
  EXPECT_THROW(m.sample(Tokens{9}, rng, 4), DomainError);
}

TEST(SequenceModel, NextTokenRowsNormalize) {
  Rng rng(2);
  SequenceModel m(hashed(64, 3, true), 20);
  testing::randomize(m.weights(), rng, 1.0);
  testing::randomize(m.copy_weights(), rng, 1.0);
  Tokens cond = random_content(rng, 5, 20);
  cond.push_back(tok::kUserField);
  const Tokens tail = random_content(rng, 4, 20);
  cond.insert(cond.end(), tail.begin(), tail.end());
  for (std::size_t len = 0; len < 5; ++len) {
    const auto lp = m.next_log_probs(cond, Tokens(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(len)));
    double total = 0.0;
    for (double x : lp) total += std::exp(x);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SequenceModel, DeterministicModelIsForced) {
  // A table that always continues 5 -> 6 -> 7 -> EOS.
  SequenceModel m(tabular(1), 10);
  const std::map<TokenId, TokenId> next{{tok::kPad, 5}, {5, 6}, {6, 7}, {7, tok::kEos}};
  for (const auto& [from, to] : next) {
    auto& row = m.table()[Tokens{from}];
    row.assign(10, kForbidden);
    row[static_cast<std::size_t>(to)] = 0.0;
  }
  const Tokens forced{5, 6, 7, tok::kEos};
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(m.sample(Tokens{}, rng, 10), forced);
  EXPECT_EQ(m.greedy(Tokens{}, 10), forced);
  EXPECT_NEAR(m.log_prob(Tokens{}, forced), 0.0, 1e-12);
  EXPECT_EQ(m.greedy(Tokens{}, 2), (Tokens{5, 6}));
}

TEST(SequenceModel, GreedyTieGoesToLowerId) {
  SequenceModel m(tabular(1), 12);
  auto& row = m.table()[Tokens{tok::kPad}];
  row.assign(12, 0.0);
  row[5] = 2.0;
  row[9] = 2.0;
  auto& after = m.table()[Tokens{5}];
  after.assign(12, 0.0);
  after[tok::kEos] = 1.0;
  EXPECT_EQ(m.greedy(Tokens{}, 4), (Tokens{5, tok::kEos}));
}

TEST(SequenceModel, SamplesMatchProbabilities) {
  Rng build(17);
  const std::size_t vocab = 6;
  const Tokens cond{tok::kNull};
  const SequenceModel m = bounded_model(vocab, 2, build, cond);
  const auto space = terminated_sequences(vocab, 2);
  std::map<Tokens, std::size_t> counts;
  Rng rng(99);
  const std::size_t draws = 20000;
  for (std::size_t i = 0; i < draws; ++i) ++counts[m.sample(cond, rng, 2)];
  double stat = 0.0;
  std::size_t cells = 0;
  for (const auto& s : space) {
    const double expected = static_cast<double>(draws) * std::exp(m.log_prob(cond, s));
    ASSERT_GT(expected, 5.0) << "fixture too skewed for a chi-square test";
    const double got = static_cast<double>(counts[s]);
    stat += (got - expected) * (got - expected) / expected;
    ++cells;
  }
  EXPECT_EQ(counts.size(), space.size());
  const boost::math::chi_squared dist(static_cast<double>(cells - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, stat)), 1e-3) << "chi2 " << stat;
}

struct LayoutCase {
  Tokens condition;
  Tokens target;
};

// Conditions and targets shaped like the generator and inference layouts,
// with source tokens repeated in the target so pointer and copy paths fire.
LayoutCase random_layout(Rng& rng, std::size_t vocab, bool inference) {
  const Tokens ctx = random_content(rng, 3, vocab);
  const Tokens user = random_content(rng, 3, vocab);
  const Tokens src = random_content(rng, 4, vocab);
  const Tokens act = random_content(rng, 2, vocab);
  if (inference) {
    const Tokens xi{src[1], src[2], tok::kSep};
    return {inference_condition(ctx, user, src), inference_target(xi, act)};
  }
  const Tokens resp{src[0], src[3], random_content(rng, 1, vocab)[0]};
  return {generator_condition(ctx, user, src), generator_target(act, resp)};
}

TEST(SequenceModel, HashedGradientMatchesFiniteDifferences) {
  Rng rng(31);
  const std::size_t vocab = 16;
  for (int trial = 0; trial < 25; ++trial) {
    for (bool copy : {false, true}) {
      SequenceModel m(hashed(48, trial, copy), vocab);
      testing::randomize(m.weights(), rng, 0.3);
      if (copy) testing::randomize(m.copy_weights(), rng, 0.5);
      const auto lc = random_layout(rng, vocab, trial % 2 == 0);
      SequenceGradient g;
      const double lp = m.accumulate_gradient(lc.condition, lc.target, 1.0, g);
      EXPECT_NEAR(lp, m.log_prob(lc.condition, lc.target), 1e-10);
      const double err =
          testing::worst_gradient_error(m, g, [&] { return m.log_prob(lc.condition, lc.target); });
      EXPECT_LT(err, 1e-5) << "trial " << trial << " copy " << copy;
    }
  }
}

TEST(SequenceModel, TabularGradientMatchesFiniteDifferences) {
  Rng rng(32);
  const std::size_t vocab = 12;
  for (int trial = 0; trial < 25; ++trial) {
    SequenceModel m(tabular(2), vocab);
    const auto lc = random_layout(rng, vocab, trial % 2 == 1);
    SequenceGradient seed;
    m.accumulate_gradient(lc.condition, lc.target, 1.0, seed);
    m.apply(seed, 0.8);
    SequenceGradient g;
    m.accumulate_gradient(lc.condition, lc.target, 1.0, g);
    const double err = testing::worst_gradient_error(m, g, [&] { return m.log_prob(lc.condition, lc.target); });
    EXPECT_LT(err, 1e-5) << "trial " << trial;
  }
}

TEST(SequenceModel, CopyHeadRaisesSourceTokens) {
  SequenceModel m(hashed(32, 1, true), 20);
  for (auto& w : m.copy_weights()) w = 5.0;
  const Tokens cond{tok::kUserField, 13, 17};
  const auto lp = m.next_log_probs(cond, {});
  for (TokenId v = 0; v < 20; ++v)
    if (v != 13 && v != 17) {
      EXPECT_GT(lp[13], lp[static_cast<std::size_t>(v)]);
      EXPECT_GT(lp[17], lp[static_cast<std::size_t>(v)]);
    }
}

TEST(SequenceModel, ZeroAndNonFiniteUpdates) {
  Rng rng(5);
  SequenceModel m(hashed(32, 2, true), 14);
  testing::randomize(m.weights(), rng, 0.3);
  const SequenceModel before = m;
  const Tokens cond = random_content(rng, 4, 14);
  const Tokens target{11, 12, tok::kEos};
  SequenceGradient g;
  m.apply(g, 1.0);
  EXPECT_EQ(m, before);
  m.accumulate_gradient(cond, target, 1.0, g);
  m.apply(g, 0.0);
  EXPECT_EQ(m, before);
  m.accumulate_gradient(cond, target, std::numeric_limits<double>::infinity(), g);
  EXPECT_THROW(m.apply(g, 0.1), NumericError);
  EXPECT_EQ(m, before);
}

TEST(SequenceModel, GradientStepRaisesLikelihood) {
  Rng rng(6);
  for (const auto& enc : {hashed(64, 7, true), tabular(2)}) {
    SequenceModel m(enc, 14);
    const Tokens cond = random_content(rng, 4, 14);
    const Tokens target{11, 12, tok::kEos};
    const double before = m.log_prob(cond, target);
    SequenceGradient g;
    m.accumulate_gradient(cond, target, 1.0, g);
    m.apply(g, 0.05);
    EXPECT_GT(m.log_prob(cond, target), before);
  }
}

}  // namespace
}  // namespace krtod
