#include "loopy/backtest.hpp"
#include "loopy/synthetic.hpp"

#include <benchmark/benchmark.h>

using namespace loopy;

namespace {

const SnapshotSeries& series() {
    static const SnapshotSeries s = generate_synthetic(builtin_scenario("volatile"), 20250101);
    return s;
}

// 90 days of hourly data, two markets.
void BM_Backtest(benchmark::State& state) {
    BacktestConfig cfg;
    cfg.strategy = static_cast<StrategyKind>(state.range(0));
    cfg.rebalance_every_seconds = state.range(1);
    cfg.fees = {0.0, 0.0001, 1.0 / 365.0};
    for (auto _ : state) benchmark::DoNotOptimize(run_backtest(series(), cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(series().snapshots.size()));
}
BENCHMARK(BM_Backtest)
    ->ArgsProduct({{static_cast<int>(StrategyKind::fixed_frequency), static_cast<int>(StrategyKind::dynamic)}, {3600, 86400}})
    ->Unit(benchmark::kMillisecond);

void BM_SmoothRates(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(smooth_rates(series(), 86400));
}
BENCHMARK(BM_SmoothRates)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
