#include <benchmark/benchmark.h>

#include "mpipn/autodiff/ops.hpp"
#include "mpipn/autodiff/taylor.hpp"
#include "mpipn/autodiff/tensor.hpp"
#include "mpipn/geometry.hpp"
#include "mpipn/network.hpp"
#include "mpipn/rng.hpp"
#include "mpipn/training.hpp"

using namespace mpipn;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({r, c});
  for (auto& v : t.storage()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MatMul(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(rows, 64, 1), b = random_tensor(64, 128, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(ad::matmul(tape.leaf(a), tape.leaf(b)).value().ptr());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_MatMul)->Arg(500)->Arg(1377)->Arg(4928);

void BM_MatMulBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(rows, 64, 1), b = random_tensor(64, 128, 2);
  for (auto _ : state) {
    Tape tape;
    const Var w = tape.leaf(b, true);
    const Var loss = ad::sum(ad::matmul(tape.leaf(a), w));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(w).ptr());
  }
}
BENCHMARK(BM_MatMulBackward)->Arg(500)->Arg(1377);

void BM_MishDerivatives(benchmark::State& state) {
  double x = -4.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ad::mish_derivatives(x));
    x = x > 4.0 ? -4.0 : x + 1e-3;
  }
}
BENCHMARK(BM_MishDerivatives);

void BM_CaseGeometry(benchmark::State& state) {
  const auto config = geometry::case_config(state.range(0) == 1 ? "case1" : "case3");
  for (auto _ : state) benchmark::DoNotOptimize(geometry::build_case_geometry(config, 1).interior.data());
}
BENCHMARK(BM_CaseGeometry)->Arg(1)->Arg(3);

void BM_Forward(benchmark::State& state) {
  const auto cloud = geometry::build_case_geometry(geometry::case_config("case1"), 1);
  net::ModelParams m = net::init_params(3);
  net::set_input_normalization(m, geometry::case_config("case1").outer, 300.0, 500.0);
  const std::vector<double> implicit(50, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(net::forward(m, cloud, 400.0, implicit)[0].ptr());
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

// One desk training step's loss and gradient; arg 1 adds the PDE jets.
void BM_DeskConditionLoss(benchmark::State& state) {
  training::DatasetOptions o;
  const auto data = training::build_dataset(o);
  const auto model = training::init_model(data, 0);
  const double beta = state.range(0) ? 0.01 : 0.0;
  for (auto _ : state) {
    std::vector<Tensor> grads;
    benchmark::DoNotOptimize(training::condition_loss(model, data, data.train[0], 1.0, beta, &grads).total);
  }
}
BENCHMARK(BM_DeskConditionLoss)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  ad::retain_freed_memory();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
