#include <benchmark/benchmark.h>

#include <random>

#include "krtod/model.hpp"
#include "krtod/retriever.hpp"
#include "krtod/sequence_model.hpp"

namespace {

using namespace krtod;

Tokens random_tokens(Rng& rng, std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> pick(tok::kFirstContent, static_cast<TokenId>(vocab) - 1);
  Tokens out(len);
  for (auto& t : out) t = pick(rng);
  return out;
}

SequenceModel hashed_model(std::size_t vocab, bool copy) {
  EncoderConfig e;
  e.dim = 4096;
  e.copy = copy;
  SequenceModel m(e, vocab);
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& w : m.weights()) w = n(rng);
  return m;
}

void BM_SequenceLogProb(benchmark::State& state) {
  const std::size_t vocab = static_cast<std::size_t>(state.range(0));
  const SequenceModel m = hashed_model(vocab, false);
  Rng rng(1);
  const Tokens cond = random_tokens(rng, 40, vocab);
  Tokens target = random_tokens(rng, static_cast<std::size_t>(state.range(1)), vocab);
  target.push_back(tok::kEos);
  for (auto _ : state) benchmark::DoNotOptimize(m.log_prob(cond, target));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(target.size()));
}
BENCHMARK(BM_SequenceLogProb)->Args({120, 12})->Args({1100, 12})->Args({1100, 40});

void BM_SequenceGradient(benchmark::State& state) {
  const std::size_t vocab = static_cast<std::size_t>(state.range(0));
  const SequenceModel m = hashed_model(vocab, state.range(1) != 0);
  Rng rng(2);
  const Tokens cond = random_tokens(rng, 40, vocab);
  Tokens target = random_tokens(rng, 12, vocab);
  target.push_back(tok::kEos);
  for (auto _ : state) {
    SequenceGradient g;
    benchmark::DoNotOptimize(m.accumulate_gradient(cond, target, 1.0, g));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(target.size()));
}
BENCHMARK(BM_SequenceGradient)->Args({120, 0})->Args({1100, 0})->Args({1100, 1});

void BM_SequenceGreedy(benchmark::State& state) {
  const SequenceModel m = hashed_model(1100, true);
  Rng rng(4);
  const Tokens cond = random_tokens(rng, 40, 1100);
  for (auto _ : state) benchmark::DoNotOptimize(m.greedy(cond, 24));
}
BENCHMARK(BM_SequenceGreedy);

void BM_RetrieverXiLogProb(benchmark::State& state) {
  EncoderConfig e;
  e.dim = 4096;
  Retriever r(e);
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& w : r.weights()) w = n(rng);
  Vocabulary vocab;
  for (int i = 0; i < 50; ++i) vocab.add("w" + std::to_string(i));
  KnowledgeBase kb;
  const auto entries = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < entries; ++i)
    kb.add("w" + std::to_string(i), "w" + std::to_string(i + 1), "w" + std::to_string(i + 2), vocab);
  const Tokens ctx = random_tokens(rng, 30, vocab.size());
  const Tokens user = random_tokens(rng, 8, vocab.size());
  const KbMask mask(entries, 1);
  for (auto _ : state) benchmark::DoNotOptimize(r.xi_log_prob(ctx, user, mask, kb));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RetrieverXiLogProb)->Arg(3)->Arg(6)->Arg(10);

}  // namespace
