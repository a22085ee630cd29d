#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "amc/svm.hpp"

namespace {

// Two overlapping Gaussian blobs in 256 dimensions, the width of the CNN feature layer.
struct Problem {
    Eigen::MatrixXd x;
    std::vector<int> y;
};

Problem blobs(Eigen::Index n) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    Problem p{Eigen::MatrixXd(n, 256), std::vector<int>(static_cast<std::size_t>(n))};
    for (Eigen::Index i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : -1;
        p.y[static_cast<std::size_t>(i)] = label;
        for (Eigen::Index j = 0; j < 256; ++j) p.x(i, j) = g(rng) + 0.15 * label;
    }
    return p;
}

void RbfKernel(benchmark::State& state) {
    const auto p = blobs(state.range(0));
    for (auto _ : state) {
        auto k = amc::svm::rbf_kernel(p.x, p.x, 1.0 / 256);
        benchmark::DoNotOptimize(k.data());
    }
}
BENCHMARK(RbfKernel)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void SmoSolve(benchmark::State& state) {
    const auto p = blobs(state.range(0));
    const auto k = amc::svm::rbf_kernel(p.x, p.x, 1.0 / 256);
    for (auto _ : state) {
        auto sol = amc::svm::solve_dual(k, p.y, 10.0);
        benchmark::DoNotOptimize(sol.alpha.data());
    }
}
BENCHMARK(SmoSolve)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void DecisionScores(benchmark::State& state) {
    const auto p = blobs(1000);
    amc::svm::OvaSvm ova;
    ova.standardizer = amc::svm::Standardizer::identity(256);
    ova.machines.push_back(amc::svm::solve_binary(p.x, p.y, 10.0, 1.0 / 256));
    const Eigen::VectorXd f = p.x.row(0).transpose();
    for (auto _ : state) {
        auto s = amc::svm::decision_scores(ova, f);
        benchmark::DoNotOptimize(s.data());
    }
}
BENCHMARK(DecisionScores)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
