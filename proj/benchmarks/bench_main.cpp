#include <benchmark/benchmark.h>

#include <vector>

#include "recnn/recnn.hpp"

using namespace recnn;

namespace {

Dataset chains(std::size_t count, std::size_t depth) {
  TaskSpec spec;
  spec.count = count;
  spec.min_depth = spec.max_depth = depth;
  return generate(spec);
}

RecursiveModel model_for(const std::string& arch, const DatasetSchema& schema) {
  return RecursiveModel(make_model_config(parse_architecture(arch), schema));
}

const char* const kArchs[] = {"10x20x1", "23x20x1", "40x80x1"};

}  // namespace

static void BM_CellForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  CellSpec spec{n + 1, n, {}, Activation::kTanh, Activation::kTanh};
  const Cell cell(spec);
  const auto params = init_params(spec, 1);
  std::vector<double> x(n + 1, 0.25);
  CellTrace trace;
  for (auto _ : state) {
    cell.forward(params, x, trace);
    benchmark::DoNotOptimize(trace.activations.back().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cell.param_count()));
}
BENCHMARK(BM_CellForward)->Arg(10)->Arg(23)->Arg(40)->Arg(80);

static void BM_SGradients(benchmark::State& state) {
  const Dataset data = chains(16, static_cast<std::size_t>(state.range(1)));
  const RecursiveModel model = model_for(kArchs[state.range(0)], data.schema);
  const auto params = model.init_params(0);
  std::vector<double> grad(model.param_count());
  BptsWorkspace ws;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(s_gradients(model, params, data.patterns[i++ % data.patterns.size()], grad, ws));
  }
  state.SetLabel(kArchs[state.range(0)]);
}
BENCHMARK(BM_SGradients)->ArgsProduct({{0, 1, 2}, {4, 16}});

static void BM_VetsEpoch(benchmark::State& state) {
  const Dataset data = chains(static_cast<std::size_t>(state.range(1)), 8);
  const RecursiveModel model = model_for(kArchs[state.range(0)], data.schema);
  const auto params0 = model.init_params(0);
  const RecursiveObjective objective(model, data.patterns);
  VetsConfig config;
  config.max_epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(vets_train(objective, params0, config).final_params.data());
  }
  state.SetLabel(kArchs[state.range(0)]);
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_VetsEpoch)->ArgsProduct({{0, 1, 2}, {100, 400}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
