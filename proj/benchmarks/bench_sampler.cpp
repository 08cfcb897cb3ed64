#include <benchmark/benchmark.h>

#include "krtod/oracle.hpp"
#include "krtod/sampler.hpp"

namespace {

using namespace krtod;

void BM_MisStep(benchmark::State& state) {
  const TinyInstance inst = random_tiny_instance(7, 3, 3, 2);
  const TurnView view{inst.context, inst.user, inst.response, &inst.kb};
  const Posterior post =
      exact_posterior(inst.theta, inst.context, inst.user, inst.response, inst.kb, inst.vocab, inst.max_act_len);
  Rng rng(1);
  const Phi phi = proposal_from_posterior(perturb_posterior(post, 0.5, rng), inst.context, inst.user, inst.response,
                                          inst.kb, inst.vocab.size(), 0.1);
  SamplerConfig sc;
  sc.max_act_len = inst.max_act_len;
  std::optional<LatentState> current;
  for (auto _ : state) benchmark::DoNotOptimize(mis_step(inst.theta, phi, view, current, rng, sc));
}
BENCHMARK(BM_MisStep);

void BM_ExactPosterior(benchmark::State& state) {
  const TinyInstance inst = random_tiny_instance(8, static_cast<std::size_t>(state.range(0)), 3, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        exact_posterior(inst.theta, inst.context, inst.user, inst.response, inst.kb, inst.vocab, inst.max_act_len));
}
BENCHMARK(BM_ExactPosterior)->Arg(2)->Arg(4)->Arg(6);

}  // namespace
