#include <benchmark/benchmark.h>

#include <random>

#include "krtod/metrics.hpp"

namespace {

using namespace krtod;

std::vector<std::string> sentences(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> word(0, 199), len(5, 20);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (int k = len(rng); k > 0; --k) s += (s.empty() ? "w" : " w") + std::to_string(word(rng));
    out.push_back(s);
  }
  return out;
}

void BM_CorpusBleu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto hyp = sentences(n, 1), ref = sentences(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(bleu4(hyp, ref));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CorpusBleu)->Arg(100)->Arg(1000);

void BM_MatchedPairs(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(150.0, 40.0);
  std::vector<double> a(500), b(500);
  for (auto& v : a) v = n(rng);
  for (auto& v : b) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(matched_pairs_test(a, b, 10000, 1));
}
BENCHMARK(BM_MatchedPairs);

}  // namespace
