#include <benchmark/benchmark.h>

#include "amc/dataset.hpp"
#include "amc/neuralnet.hpp"
#include "amc/runtime.hpp"

namespace {

amc::nn::Matrix<float> random_batch(Eigen::Index batch) {
    return amc::nn::Matrix<float>::Random(static_cast<Eigen::Index>(amc::kFrameSize), batch);
}

void CnnForward(benchmark::State& state) {
    const auto model = amc::nn::CnnModel::initialized({}, 1);
    const auto x = random_batch(state.range(0));
    for (auto _ : state) {
        auto t = amc::nn::forward_batch(model, x);
        benchmark::DoNotOptimize(t.logits.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(CnnForward)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void CnnTrainStep(benchmark::State& state) {
    const auto model = amc::nn::CnnModel::initialized({}, 1);
    const auto x = random_batch(state.range(0));
    amc::nn::Matrix<float> y = amc::nn::Matrix<float>::Constant(11, state.range(0), 1.0f / 11);
    for (auto _ : state) {
        auto lg = amc::nn::loss_and_grads(model, x, y);
        benchmark::DoNotOptimize(lg.loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(CnnTrainStep)->Arg(128)->Unit(benchmark::kMillisecond);

void FeatureVjp(benchmark::State& state) {
    const auto model = amc::nn::CnnModel::initialized({}, 1);
    const auto x = random_batch(1);
    const auto trace = amc::nn::forward<float>(model, std::span<const float>(x.data(), amc::kFrameSize));
    std::vector<float> v(256, 0.01f);
    for (auto _ : state) {
        auto g = amc::nn::feature_jacobian_vjp<float>(model, trace, v);
        benchmark::DoNotOptimize(g.data());
    }
}
BENCHMARK(FeatureVjp)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
    amc::tune_allocator();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
