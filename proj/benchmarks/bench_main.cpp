#include "mtu/curvature.hpp"
#include "mtu/harness.hpp"
#include "mtu/loss.hpp"
#include "mtu/model.hpp"
#include "mtu/optimizer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mtu;

namespace {

ModelSpec mlp(int vocab) { return {ModelKind::Mlp, vocab, 2, 8}; }

Vector random_theta(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Vector v(static_cast<Eigen::Index>(spec.param_count()));
  for (auto& x : v) x = u(gen);
  return v;
}

Corpus corpus_for(int vocab) {
  CorpusSpec cs;
  cs.vocab_size = vocab;
  cs.seed = 11;
  return generate_corpus(cs);
}

void BM_AssembleGnh(benchmark::State& state) {
  const auto spec = mlp(static_cast<int>(state.range(0)));
  const auto theta = random_theta(spec, 1);
  const auto data = corpus_for(spec.vocab_size).pretrain_set(spec.context_len);
  for (auto _ : state) benchmark::DoNotOptimize(assemble_gnh(spec, theta, data).hessian.data());
  state.counters["params"] = static_cast<double>(spec.param_count());
}
BENCHMARK(BM_AssembleGnh)->Arg(8)->Arg(16)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_NaturalGradient(benchmark::State& state) {
  const auto spec = mlp(static_cast<int>(state.range(0)));
  const auto theta = random_theta(spec, 2);
  const auto corpus = corpus_for(spec.vocab_size);
  const auto forget = corpus.forget_set(spec.context_len);
  const auto pretrain = corpus.pretrain_set(spec.context_len);
  const LossFunction loss(LossKind::nlul(), spec, theta);
  for (auto _ : state) {
    benchmark::DoNotOptimize(natural_gradient(spec, theta, forget, pretrain, loss, 0.1).data());
  }
}
BENCHMARK(BM_NaturalGradient)->Arg(8)->Arg(16)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_MeanTeacherSteps(benchmark::State& state) {
  const auto spec = mlp(static_cast<int>(state.range(0)));
  const auto theta = random_theta(spec, 3);
  const auto corpus = corpus_for(spec.vocab_size);
  const ModelObjective obj(spec, corpus.forget_set(spec.context_len),
                           corpus.pretrain_set(spec.context_len),
                           LossFunction(LossKind::nlul(), spec, theta), {DivergenceTag::Kl, 0.1});
  MtConfig cfg;
  cfg.eta = 0.01;
  cfg.kappa = 1.0;
  cfg.alpha = 0.5;
  cfg.mu = 0.5;
  cfg.steps = 10;
  for (auto _ : state) benchmark::DoNotOptimize(mt_run(obj, theta, cfg, true).steps.size());
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_MeanTeacherSteps)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
