#include <benchmark/benchmark.h>

#include <vector>

#include "rgbt/evaluation.hpp"
#include "rgbt/kernels.hpp"
#include "rgbt/reliability.hpp"
#include "rgbt/rng.hpp"
#include "rgbt/synthetic.hpp"

using namespace rgbt;
using kernels::Backend;

namespace {

struct Fixture {
  ModelBundle models;
  InteractionDataset data;
  std::vector<kernels::LabeledPair> labeled;
  std::vector<kernels::TransitionExample> examples;
  std::vector<kernels::Pair> pairs;

  Fixture() {
    SyntheticSpec s;
    s.interactions = 20000;
    data = generate_synthetic(s);
    models = initialize_model({data.users.size(), data.items.size(), 32, 5, 0.1, 0.9}, 1);
    CounterRng rng(2, Stream::kMonteCarlo);
    for (const auto& r : data.records) {
      labeled.push_back({r.user, r.item, r.label - 1});
      examples.push_back({r.user, r.item, r.label - 1, static_cast<int>(rng.uniform_index(5)), rng.uniform()});
      pairs.emplace_back(r.user, r.item);
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Backend backend_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Backend::kSerial : Backend::kParallel;
}

void BM_ClassLoss(benchmark::State& state) {
  const auto& f = fixture();
  Classifier grad = f.models.classifier;
  const std::span<const kernels::LabeledPair> batch(f.labeled.data(), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::class_loss(backend_of(state), f.models.classifier, &f.models.transition, batch, &grad));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_CalibratedLoss(benchmark::State& state) {
  const auto& f = fixture();
  TransitionNet grad = f.models.transition;
  const std::span<const kernels::TransitionExample> batch(f.examples.data(), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::calibrated_loss(backend_of(state), f.models.transition,
                                                      f.models.classifier.embeddings, batch, &grad));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_Posteriors(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<double> out(f.pairs.size() * 5);
  for (auto _ : state) {
    kernels::posteriors(backend_of(state), f.models.classifier, f.pairs, out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.pairs.size()));
}

void BM_Ranking(benchmark::State& state) {
  const auto& f = fixture();
  const std::vector<int> ks{10};
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_ranking(f.models.classifier, f.data, f.data, ks,
                                              kernels::ScoreKind::kTopClass, backend_of(state)));
}

void BM_Cooccurrence(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    CooccurrenceIndex idx(f.data, true, backend_of(state));
    benchmark::DoNotOptimize(idx.count(0, 0));
  }
}

}  // namespace

BENCHMARK(BM_ClassLoss)->ArgsProduct({{0, 1}, {1024, 16384}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CalibratedLoss)->ArgsProduct({{0, 1}, {1024, 16384}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Posteriors)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ranking)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Cooccurrence)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
