#include <benchmark/benchmark.h>

#include <random>

#include "rgn/autodiff.hpp"
#include "rgn/datagen.hpp"
#include "rgn/evaluation.hpp"
#include "rgn/model.hpp"
#include "rgn/objectives.hpp"
#include "rgn/training.hpp"

namespace {

using namespace rgn;

ModelConfig bench_config(std::size_t types, std::size_t hidden) {
  ModelConfig c;
  c.num_types = types;
  c.hidden_dim = hidden;
  c.edge_dim = hidden / 2;
  c.dropout = 0.0;
  return c;
}

Tensor filled_matrix(std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  std::mt19937_64 rng(1);
  for (double& x : t.data()) x = static_cast<double>(rng() % 1000) / 1000.0 - 0.5;
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = filled_matrix(n, n), b = filled_matrix(n, n);
  for (auto _ : state) {
    ad::Graph g;
    ad::Var x = g.variable(a);
    ad::Var loss = ad::sum(ad::matmul(x, g.variable(b)));
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(x));
  }
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_StepForward(benchmark::State& state) {
  const RecurrentGraphNetwork model(bench_config(static_cast<std::size_t>(state.range(0)), 32), 1);
  std::mt19937_64 rng(0);
  for (auto _ : state) {
    ad::Graph g(&model.params(), ad::GradMode::kDisabled);
    auto r = model.step(g, model.attach(g, model.init_state()), {1.0, 0}, false, rng);
    benchmark::DoNotOptimize(r.output.intensity_base.value());
  }
}
BENCHMARK(BM_StepForward)->Arg(2)->Arg(8)->Arg(22);

void BM_StepForwardBackward(benchmark::State& state) {
  RecurrentGraphNetwork model(bench_config(static_cast<std::size_t>(state.range(0)), 32), 1);
  const EventSequence seq{"b", 3.0, {{1.0, 0}, {2.0, 1}}};
  std::mt19937_64 rng(0);
  for (auto _ : state) {
    ad::Graph g(&model.params());
    auto r = model.step(g, model.attach(g, model.init_state()), seq.events[0], true, rng);
    const AnchorTerms t = score_anchor(r.output, seq, model.config(), 10, rng);
    g.backward(combined_loss(ad::sub(t.compensator, t.log_intensity), t.type_nll, t.time_sq, {}));
    model.params().clear_grad();
  }
}
BENCHMARK(BM_StepForwardBackward)->Arg(2)->Arg(8)->Arg(22);

void BM_TbpttWindow(benchmark::State& state) {
  RecurrentGraphNetwork model(bench_config(2, 32), 1);
  GeneratorSpec spec;
  spec.kind = ProcessKind::kHawkes;
  spec.hawkes = HawkesSpec{{0.2, 0.2}, {0.5, 0.3, 0.3, 0.5}, 1.0};
  spec.horizon = 50.0;
  spec.num_sequences = 16;
  const auto data = generate_dataset(spec);
  std::vector<const EventSequence*> batch;
  for (const auto& s : data) batch.push_back(&s);
  TrainConfig config;
  std::mt19937_64 rng(0);
  std::size_t events = 0;
  for (auto _ : state) {
    TbpttBatch cursor(model, batch);
    model.params().zero_grad();
    events += cursor.run_window(model, config, rng).events;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(events));
}
BENCHMARK(BM_TbpttWindow)->Unit(benchmark::kMillisecond);

void BM_RescaleSequence(benchmark::State& state) {
  const RecurrentGraphNetwork model(bench_config(2, 32), 1);
  GeneratorSpec spec;
  spec.rates = {0.5, 0.5};
  spec.num_sequences = 1;
  const EventSequence seq = generate_dataset(spec)[0];
  for (auto _ : state) benchmark::DoNotOptimize(rescale(model, seq, 100));
}
BENCHMARK(BM_RescaleSequence)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
