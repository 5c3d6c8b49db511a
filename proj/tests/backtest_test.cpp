#include "loopy/backtest.hpp"
#include "loopy/errors.hpp"
#include "loopy/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace loopy;

namespace {

SnapshotSeries scenario(const std::string& name, int days = 30, std::uint64_t seed = 1) {
    SyntheticSpec spec = builtin_scenario(name);
    spec.duration_seconds = days * 86400;
    return generate_synthetic(spec, seed);
}

// One adaptive market with hand-written rates.
SnapshotSeries manual(const std::vector<double>& rates) {
    SnapshotSeries s;
    AdaptiveIrm irm;
    irm.k_p = 50.0;
    s.markets.push_back({"M", "", 0.945, irm});
    for (std::size_t k = 0; k < rates.size(); ++k) {
        Snapshot snap;
        snap.timestamp = 1'000'000 + static_cast<Timestamp>(k) * 3600;
        snap.staking_rate = 0.03;
        snap.markets.push_back({1000.0, 800.0, rates[k], rates[k] * 2.0});
        s.snapshots.push_back(snap);
    }
    return s;
}

double staking_apy(double s, double step_years) { return std::pow(1.0 + s * step_years, 1.0 / step_years) - 1.0; }

}  // namespace

TEST(Backtest, StakingOnlyCompoundsAtStakingRate) {
    const SnapshotSeries data = scenario("positive-carry");
    BacktestConfig cfg;
    cfg.strategy = StrategyKind::staking_only;
    const BacktestResult r = run_backtest(data, cfg);
    EXPECT_NEAR(r.apy, staking_apy(0.031, 3600.0 / kSecondsPerYear), 1e-12);
    EXPECT_EQ(r.rebalance_count, 0);
    EXPECT_EQ(r.l_max, 1.0);
    for (const auto& step : r.steps) EXPECT_EQ(step.borrow_interest, 0.0);
}

TEST(Backtest, LeverageOneIsStaking) {
    const SnapshotSeries data = scenario("positive-carry");
    BacktestConfig cfg;
    cfg.l_max = 1.0;
    BacktestConfig staking = cfg;
    staking.strategy = StrategyKind::staking_only;
    EXPECT_EQ(run_backtest(data, cfg).apy, run_backtest(data, staking).apy);
}

TEST(Backtest, ShapesLineUp) {
    const SnapshotSeries data = scenario("rate-crossing", 10);
    const BacktestResult r = run_backtest(data, BacktestConfig{});
    const std::size_t n = data.snapshots.size();
    EXPECT_EQ(r.timestamps.size(), n);
    EXPECT_EQ(r.equity_curve.size(), n);
    EXPECT_EQ(r.position_history.size(), n);
    EXPECT_EQ(r.steps.size(), n - 1);
    EXPECT_EQ(r.equity_curve.front(), 10'000.0);
    EXPECT_EQ(r.market_ids, (std::vector<std::string>{"A", "B"}));
}

TEST(Backtest, ConservesValue) {
    const SnapshotSeries data = scenario("rate-crossing");
    BacktestConfig cfg;
    cfg.fees = {1e-5, 1e-5, 1.0 / 365.0};
    const BacktestResult r = run_backtest(data, cfg);
    double fees = 0.0;
    for (std::size_t k = 0; k + 1 < r.equity_curve.size(); ++k) {
        const StepLedger& s = r.steps[k];
        const double delta = r.equity_curve[k + 1] - r.equity_curve[k];
        EXPECT_NEAR(delta, s.staking_accrual - s.borrow_interest - s.fees, 1e-9 * cfg.budget) << "step " << k;
        fees += s.fees;
    }
    EXPECT_GT(r.total_fees_paid, 0.0);
    EXPECT_NEAR(fees, r.total_fees_paid, 1e-12 * cfg.budget);
}

TEST(Backtest, PositiveCarryBeatsStaking) {
    const SnapshotSeries data = scenario("positive-carry");
    BacktestConfig cfg;
    const double looped = run_backtest(data, cfg).apy;
    cfg.strategy = StrategyKind::staking_only;
    EXPECT_GT(looped, run_backtest(data, cfg).apy + 0.01);
}

TEST(Backtest, DailyFrequencyLimitsDecisions) {
    const SnapshotSeries data = scenario("rate-crossing");
    BacktestConfig cfg;
    cfg.rebalance_every_seconds = 86400;
    const BacktestResult r = run_backtest(data, cfg);
    EXPECT_GT(r.rebalance_count, 0);
    EXPECT_LE(r.rebalance_count, 30);
    // Between decisions only accrual moves the position, never the split.
    for (std::size_t k = 1; k < r.position_history.size(); ++k) {
        if (k % 24 == 0) continue;
        const Allocation& prev = r.position_history[k - 1];
        const Allocation& cur = r.position_history[k];
        for (std::size_t i = 0; i < cur.exposures.size(); ++i) {
            if (prev.exposures[i] == 0.0) EXPECT_EQ(cur.exposures[i], 0.0);
        }
    }
}

TEST(Backtest, UnreachableThresholdNeverTrades) {
    const SnapshotSeries data = scenario("positive-carry");
    BacktestConfig cfg;
    cfg.strategy = StrategyKind::dynamic;
    cfg.threshold = 10.0;
    const BacktestResult r = run_backtest(data, cfg);
    EXPECT_EQ(r.rebalance_count, 0);
    EXPECT_NEAR(r.apy, staking_apy(0.031, 3600.0 / kSecondsPerYear), 1e-12);
}

TEST(Backtest, DynamicZeroThresholdFeeFreeTracksFixed) {
    const SnapshotSeries data = scenario("rate-crossing", 20);
    BacktestConfig cfg;
    const double fixed = run_backtest(data, cfg).apy;
    cfg.strategy = StrategyKind::dynamic;
    cfg.threshold = 0.0;
    EXPECT_NEAR(run_backtest(data, cfg).apy, fixed, 1e-4);
}

TEST(Backtest, SimulatedTargetSourceRuns) {
    const SnapshotSeries data = scenario("positive-carry", 10);
    BacktestConfig cfg;
    cfg.target_source = TargetSource::simulated;
    const BacktestResult r = run_backtest(data, cfg);
    EXPECT_TRUE(std::isfinite(r.apy));
    EXPECT_GT(r.equity_curve.back(), 0.0);
}

TEST(Backtest, RejectsBadConfigs) {
    const SnapshotSeries data = scenario("positive-carry", 5);
    BacktestConfig cfg;
    cfg.rebalance_every_seconds = 5400;
    EXPECT_THROW(run_backtest(data, cfg), DomainError);
    cfg = {};
    cfg.rebalance_every_seconds = 1800;
    EXPECT_THROW(run_backtest(data, cfg), DomainError);
    cfg = {};
    cfg.budget = 0.0;
    EXPECT_THROW(run_backtest(data, cfg), DomainError);
    cfg = {};
    cfg.l_max = 30.0;
    EXPECT_THROW(run_backtest(data, cfg), ConstraintError);
    cfg = {};
    cfg.rebalance_every_seconds = 3 * 86400;
    EXPECT_THROW(run_backtest(data, cfg), DomainError);
    cfg = {};
    cfg.smoothing_window_seconds = 60;
    EXPECT_THROW(run_backtest(data, cfg), DomainError);
}

TEST(Smoothing, ConstantInputIsExact) {
    const SnapshotSeries data = scenario("positive-carry", 5);
    const SnapshotSeries smooth = smooth_rates(data, 86400);
    for (std::size_t k = 0; k < data.snapshots.size(); ++k) {
        for (std::size_t i = 0; i < data.markets.size(); ++i) {
            EXPECT_EQ(smooth.snapshots[k].markets[i].observed_borrow_rate, data.snapshots[k].markets[i].observed_borrow_rate);
        }
    }
}

TEST(Smoothing, WindowOfOneCadenceIsIdentity) {
    const SnapshotSeries data = scenario("volatile", 3);
    const SnapshotSeries smooth = smooth_rates(data, 3600);
    for (std::size_t k = 0; k < data.snapshots.size(); ++k) {
        EXPECT_EQ(smooth.snapshots[k].markets[1].observed_borrow_rate, data.snapshots[k].markets[1].observed_borrow_rate);
        EXPECT_EQ(*smooth.snapshots[k].markets[1].rate_at_target, *data.snapshots[k].markets[1].rate_at_target);
    }
}

TEST(Smoothing, TrailingWindowMean) {
    const SnapshotSeries smooth = smooth_rates(manual({0.01, 0.02, 0.03, 0.04}), 7200);
    const double expect[] = {0.01, 0.015, 0.025, 0.035};
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_NEAR(smooth.snapshots[k].markets[0].observed_borrow_rate, expect[k], 1e-17);
        EXPECT_NEAR(*smooth.snapshots[k].markets[0].rate_at_target, 2 * expect[k], 1e-17);
    }
}

TEST(SnapshotIrm, Sources) {
    MarketDescriptor md{"M", "", 0.945, std::nullopt};
    MarketSnapshot ms{1000.0, 450.0, 0.02, 0.04};
    const auto recorded = std::get<KinkedIrm>(snapshot_irm(md, ms));
    EXPECT_NEAR(recorded.r_base, 0.01, 1e-15);
    EXPECT_NEAR(recorded.r_slope2, 0.12, 1e-15);

    ms.rate_at_target.reset();
    EXPECT_THROW(snapshot_irm(md, ms), DomainError);

    AdaptiveIrm a;
    a.k_p = 50.0;
    md.irm = a;
    // u = 0.45 is halfway to target: curve = 1 - 0.75 * 0.5.
    const auto implied = std::get<KinkedIrm>(snapshot_irm(md, ms));
    EXPECT_NEAR(implied.r_base * 4.0, 0.02 / 0.625, 1e-15);

    md.irm = LinearIrm{0.01, 0.02, 0.9};
    EXPECT_TRUE(std::holds_alternative<LinearIrm>(snapshot_irm(md, ms)));
}

TEST(PoolViewTest, AddsFootprintAndClamps) {
    const MarketSnapshot ms{100.0, 60.0, 0.02, std::nullopt};
    EXPECT_EQ(PoolView(ms, 10.0).borrowed(), 70.0);
    EXPECT_EQ(PoolView(ms, 50.0).utilization(), 1.0);
    EXPECT_THROW(PoolView(ms, -1.0), DomainError);
}

TEST(Apy, Annualizes) {
    const auto year = static_cast<Timestamp>(kSecondsPerYear);
    EXPECT_NEAR(apy({0, year}, {1.0, 2.0}), 1.0, 1e-15);
    EXPECT_NEAR(apy({0, year / 2}, {1.0, 1.1}), 0.21, 1e-12);
    EXPECT_THROW(apy({0}, {1.0}), DomainError);
    EXPECT_THROW(apy({0, 1}, {1.0, -1.0}), DomainError);
}

TEST(Sweep, LogSpacedEndpoints) {
    const auto v = log_spaced(1e3, 1e8, 8);
    ASSERT_EQ(v.size(), 8u);
    EXPECT_EQ(v.front(), 1e3);
    EXPECT_EQ(v.back(), 1e8);
    for (std::size_t i = 1; i < v.size(); ++i) EXPECT_NEAR(v[i] / v[i - 1], std::pow(1e5, 1.0 / 7.0), 1e-12);
    EXPECT_EQ(log_spaced(5.0, 9.0, 1), std::vector<double>{5.0});
    EXPECT_THROW(log_spaced(0.0, 1.0, 3), DomainError);
}

TEST(Sweep, LeverageOneCurveIsFlatStaking) {
    const SnapshotSeries data = scenario("rate-crossing", 10);
    const auto curves = sweep_leverage(data, BacktestConfig{}, {1.0, 3.0}, {1e3, 1e5, 1e7});
    ASSERT_EQ(curves.size(), 2u);
    for (const auto& p : curves[0].points) EXPECT_NEAR(p.apy, staking_apy(0.031, 3600.0 / kSecondsPerYear), 1e-12);
    for (std::size_t i = 1; i < curves[1].points.size(); ++i) {
        EXPECT_LE(curves[1].points[i].apy, curves[1].points[i - 1].apy + 1e-12);
    }
}

TEST(Sweep, MatchesSingleRuns) {
    const SnapshotSeries data = scenario("positive-carry", 5);
    BacktestConfig cfg;
    const auto points = sweep_budgets(data, cfg, {2e3, 2e5});
    cfg.budget = 2e5;
    EXPECT_EQ(points[1].apy, run_backtest(data, cfg).apy);
}
