#include "loopy/allocator.hpp"
#include "loopy/rebalance.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <string>

using namespace loopy;

namespace {

// n markets of one model family (0 linear, 1 kinked, 2 adaptive), budget at
// half the saturated total so the multiplier search runs.
ProblemInstance instance(int n, int model, unsigned seed = 7) {
    std::mt19937_64 rng(seed);
    auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    ProblemInstance p;
    p.staking_rate = 0.03;
    for (int i = 0; i < n; ++i) {
        const double supplied = u(1e3, 1e6);
        const double borrowed = u(0.1, 0.5) * supplied;
        IrmParams irm;
        if (model == 0) irm = LinearIrm{u(0.0, 0.01), u(0.01, 0.05), 0.9};
        else if (model == 1) irm = KinkedIrm{u(0.0, 0.01), u(0.01, 0.05), u(0.3, 1.0), 0.9};
        else irm = AdaptiveIrm{u(0.01, 0.04), 4.0, 0.9, 50.0, 0, 0.9};
        p.markets.push_back({MarketState("m" + std::to_string(i), supplied, borrowed, 0.945, irm), 5.0});
    }
    double saturated = 0.0;
    for (const auto& slot : p.markets) saturated += market_response(slot.market, slot.l_max, p.staking_rate, p.staking_rate);
    p.budget = saturated > 0.0 ? 0.5 * saturated : 1.0;
    return p;
}

void BM_Solve(benchmark::State& state) {
    const ProblemInstance p = instance(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(solve(p));
}
BENCHMARK(BM_Solve)->ArgsProduct({{1, 4, 16, 64, 256}, {0, 1, 2}});

void BM_Waterfilling(benchmark::State& state) {
    const ProblemInstance p = instance(static_cast<int>(state.range(0)), 0);
    for (auto _ : state) benchmark::DoNotOptimize(solve_waterfilling_linear(p));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Waterfilling)->RangeMultiplier(4)->Range(1, 256)->Complexity();

void BM_VerifyKkt(benchmark::State& state) {
    const ProblemInstance p = instance(static_cast<int>(state.range(0)), 1);
    const Allocation a = solve(p);
    for (auto _ : state) benchmark::DoNotOptimize(verify_kkt(a, p, 1e-8));
}
BENCHMARK(BM_VerifyKkt)->Arg(4)->Arg(64);

void BM_SolveWithFees(benchmark::State& state) {
    const ProblemInstance p = instance(static_cast<int>(state.range(0)), 1);
    const Allocation current = pure_staking(p);
    const FeeModel fees{0.0001, 0.0001, 1.0 / 365.0};
    for (auto _ : state) benchmark::DoNotOptimize(solve_with_fees(p, current, fees));
}
BENCHMARK(BM_SolveWithFees)->Arg(4)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
