#pragma once

// Time-stepped replay of looping strategies over recorded pool states.

#include "loopy/allocator.hpp"
#include "loopy/irm.hpp"
#include "loopy/rebalance.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace loopy {

struct MarketSnapshot {
    double supplied = 0.0;  // loan-asset units
    double borrowed = 0.0;
    double observed_borrow_rate = 0.0;
    std::optional<double> rate_at_target;
};

struct Snapshot {
    Timestamp timestamp = 0;
    std::vector<MarketSnapshot> markets;  // aligned with SnapshotSeries::markets
    double staking_rate = 0.0;
};

struct MarketDescriptor {
    std::string id;
    std::string creation_date;
    double lltv = 0.945;
    // Fallback or controller parameters; recorded rate-at-target data takes
    // precedence in the default mode.
    std::optional<IrmParams> irm;
};

struct SnapshotSeries {
    std::vector<MarketDescriptor> markets;
    std::vector<Snapshot> snapshots;
    std::int64_t cadence_seconds = 3600;
};

// Curve constants of the deployed adaptive model, used for recorded
// rate-at-target data when no parameters are configured.
inline constexpr double kDefaultAdaptiveKd = 4.0;
inline constexpr double kDefaultAdaptiveUStar = 0.9;

enum class StrategyKind { fixed_frequency, dynamic, staking_only };

const char* to_string(StrategyKind kind) noexcept;

enum class TargetSource {
    recorded,   // rate_at_target from data; else implied from observed rate (adaptive) or configured model
    simulated,  // evolve the adaptive controller from configured parameters along our footprinted utilization
};

struct BacktestConfig {
    double budget = 10'000.0;
    double l_max = 5.0;
    std::int64_t rebalance_every_seconds = 3600;
    StrategyKind strategy = StrategyKind::fixed_frequency;
    double threshold = 0.002;  // dynamic gate, rate/year (20 bps)
    bool gate_net_of_cost = true;
    FeeModel fees{};
    std::int64_t smoothing_window_seconds = 86400;
    TargetSource target_source = TargetSource::recorded;

    void validate(std::int64_t cadence_seconds) const;
};

// Per-step accounting; equity[k+1] - equity[k] == staking - interest - fees.
struct StepLedger {
    double staking_accrual = 0.0;
    double borrow_interest = 0.0;
    double fees = 0.0;
};

struct BacktestResult {
    std::vector<std::string> market_ids;
    double l_max = 5.0;
    std::vector<Timestamp> timestamps;
    std::vector<double> equity_curve;          // pre-trade equity at each timestamp
    std::vector<Allocation> position_history;  // post-trade position held over [t_k, t_k+1)
    std::vector<StepLedger> steps;             // one per interval, size N - 1
    double apy = 0.0;
    double total_fees_paid = 0.0;
    int rebalance_count = 0;
    BacktestConfig config{};
};

// Recorded pool plus our own outstanding borrow. Only borrowing moves
// utilization; our collateral sits outside the pool.
class PoolView {
public:
    PoolView(const MarketSnapshot& recorded, double own_debt);

    double supplied() const noexcept { return recorded_->supplied; }
    double borrowed() const noexcept;  // recorded + own, clamped to supplied
    double utilization() const noexcept { return borrowed() / supplied(); }
    double own_debt() const noexcept { return own_debt_; }
    const MarketSnapshot& without_footprint() const noexcept { return *recorded_; }

private:
    const MarketSnapshot* recorded_;
    double own_debt_;
};

SnapshotSeries smooth_rates(const SnapshotSeries& series, std::int64_t window_seconds);

BacktestResult run_backtest(const SnapshotSeries& data, const BacktestConfig& cfg);

// (V_end / V_start)^(1 year / elapsed) - 1.
double apy(const std::vector<Timestamp>& timestamps, const std::vector<double>& equity);

struct BudgetPoint {
    double budget = 0.0;
    double apy = 0.0;
};

std::vector<BudgetPoint> sweep_budgets(const SnapshotSeries& data, const BacktestConfig& cfg,
                                       const std::vector<double>& budgets);

struct LeverageCurve {
    double l_max = 1.0;
    std::vector<BudgetPoint> points;
};

// l_max == 1 means no borrowing, i.e. the staking-only strategy.
std::vector<LeverageCurve> sweep_leverage(const SnapshotSeries& data, const BacktestConfig& cfg,
                                          const std::vector<double>& l_max_values, const std::vector<double>& budgets);

std::vector<double> log_spaced(double lo, double hi, std::size_t count);

// The IRM governing market i at snapshot k in recorded mode.
IrmParams snapshot_irm(const MarketDescriptor& market, const MarketSnapshot& snap);

}  // namespace loopy
