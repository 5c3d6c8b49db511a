#include "loopy/backtest.hpp"

#include "loopy/errors.hpp"
#include "loopy/position.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

namespace loopy {
namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

const AdaptiveIrm* configured_adaptive(const MarketDescriptor& market) {
    if (!market.irm) return nullptr;
    return std::get_if<AdaptiveIrm>(&*market.irm);
}

struct CurveShape {
    double k_d = kDefaultAdaptiveKd;
    double u_star = kDefaultAdaptiveUStar;
};

CurveShape curve_shape(const MarketDescriptor& market) {
    if (const auto* a = configured_adaptive(market)) return {a->k_d, a->u_star};
    return {};
}

// Per-market adaptive controller state for the simulated target source.
struct Controller {
    bool active = false;
    AdaptiveIrm state{};
};

bool leverage_disabled(const BacktestConfig& cfg) {
    return cfg.strategy == StrategyKind::staking_only || cfg.l_max <= 1.0;
}

}  // namespace

const char* to_string(StrategyKind kind) noexcept {
    switch (kind) {
        case StrategyKind::fixed_frequency: return "fixed";
        case StrategyKind::dynamic: return "dynamic";
        case StrategyKind::staking_only: return "staking";
    }
    return "fixed";
}

void BacktestConfig::validate(std::int64_t cadence_seconds) const {
    require(std::isfinite(budget) && budget > 0.0, "budget must be positive");
    require(std::isfinite(l_max) && l_max >= 1.0, "l_max must be at least 1");
    require(cadence_seconds > 0, "data cadence must be positive");
    require(rebalance_every_seconds >= cadence_seconds, "rebalance frequency must not be shorter than the data cadence");
    require(rebalance_every_seconds % cadence_seconds == 0, "rebalance frequency must be a multiple of the data cadence");
    require(std::isfinite(threshold) && threshold >= 0.0, "threshold must be non-negative");
    require(smoothing_window_seconds >= cadence_seconds, "smoothing window must not be shorter than the data cadence");
    fees.validate();
}

PoolView::PoolView(const MarketSnapshot& recorded, double own_debt) : recorded_(&recorded), own_debt_(own_debt) {
    require(own_debt >= 0.0, "own debt must be non-negative");
}

double PoolView::borrowed() const noexcept { return std::min(recorded_->supplied, recorded_->borrowed + own_debt_); }

SnapshotSeries smooth_rates(const SnapshotSeries& series, std::int64_t window_seconds) {
    require(!series.snapshots.empty(), "cannot smooth an empty series");
    require(window_seconds >= series.cadence_seconds, "smoothing window shorter than the data cadence");

    SnapshotSeries out = series;
    const auto& in = series.snapshots;
    const std::size_t n_markets = series.markets.size();
    std::size_t first = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const Timestamp t = in[k].timestamp;
        while (in[first].timestamp <= t - window_seconds) ++first;
        for (std::size_t i = 0; i < n_markets; ++i) {
            // Incremental means keep constant inputs bit-exact.
            double rate_mean = 0.0;
            double target_mean = 0.0;
            std::size_t rate_count = 0;
            std::size_t target_count = 0;
            for (std::size_t j = first; j <= k; ++j) {
                const MarketSnapshot& ms = in[j].markets[i];
                ++rate_count;
                rate_mean += (ms.observed_borrow_rate - rate_mean) / static_cast<double>(rate_count);
                if (ms.rate_at_target) {
                    ++target_count;
                    target_mean += (*ms.rate_at_target - target_mean) / static_cast<double>(target_count);
                }
            }
            MarketSnapshot& dst = out.snapshots[k].markets[i];
            dst.observed_borrow_rate = rate_mean;
            if (target_count > 0) dst.rate_at_target = target_mean;
            else dst.rate_at_target.reset();
        }
    }
    return out;
}

IrmParams snapshot_irm(const MarketDescriptor& market, const MarketSnapshot& snap) {
    const CurveShape shape = curve_shape(market);
    if (snap.rate_at_target) {
        require(*snap.rate_at_target > 0.0, "market " + market.id + ": rate at target must be positive");
        return adaptive_as_kinked(*snap.rate_at_target, shape.k_d, shape.u_star);
    }
    if (configured_adaptive(market)) {
        const double u = snap.borrowed / snap.supplied;
        const double implied = snap.observed_borrow_rate / adaptive_curve(u, shape.u_star, shape.k_d);
        require(implied > 0.0, "market " + market.id + ": observed borrow rate must be positive");
        return adaptive_as_kinked(implied, shape.k_d, shape.u_star);
    }
    if (market.irm) return *market.irm;
    throw DomainError("market " + market.id + " has neither rate-at-target data nor a configured rate model");
}

double apy(const std::vector<Timestamp>& timestamps, const std::vector<double>& equity) {
    require(timestamps.size() == equity.size(), "timestamps and equity differ in length");
    require(equity.size() >= 2, "APY needs at least two points");
    for (double v : equity) require(std::isfinite(v) && v > 0.0, "equity values must be positive");
    const double elapsed = static_cast<double>(timestamps.back() - timestamps.front()) / kSecondsPerYear;
    require(elapsed > 0.0, "APY needs a positive elapsed time");
    return std::pow(equity.back() / equity.front(), 1.0 / elapsed) - 1.0;
}

BacktestResult run_backtest(const SnapshotSeries& data, const BacktestConfig& cfg) {
    require(!data.markets.empty(), "backtest needs at least one market");
    cfg.validate(data.cadence_seconds);
    const auto& raw = data.snapshots;
    require(raw.size() >= 2, "backtest needs at least two snapshots");
    require(raw.back().timestamp - raw.front().timestamp >= 2 * cfg.rebalance_every_seconds,
            "series must cover at least two rebalance intervals");

    const std::size_t n = data.markets.size();
    const bool staking_only = leverage_disabled(cfg);
    const double l = staking_only ? 1.0 : cfg.l_max;
    const double m = l - 1.0;
    if (!staking_only) {
        for (const auto& md : data.markets) {
            const double bound = max_leverage_bound(md.lltv);
            if (l > bound * (1.0 + 1e-12)) {
                std::ostringstream msg;
                msg << "l_max " << l << " exceeds the LTV bound " << bound << " of market " << md.id;
                throw ConstraintError(msg.str());
            }
        }
    }
    const std::int64_t every = cfg.rebalance_every_seconds / data.cadence_seconds;

    const SnapshotSeries series = smooth_rates(data, cfg.smoothing_window_seconds);
    const auto& snaps = series.snapshots;

    std::vector<Controller> controllers(n);
    if (cfg.target_source == TargetSource::simulated && !staking_only) {
        for (std::size_t i = 0; i < n; ++i) {
            if (const auto* a = configured_adaptive(data.markets[i])) {
                controllers[i].active = true;
                controllers[i].state = *a;
                controllers[i].state.t_last = snaps.front().timestamp;
                controllers[i].state.u_last = snaps.front().markets[i].borrowed / snaps.front().markets[i].supplied;
                if (snaps.front().markets[i].rate_at_target) {
                    controllers[i].state.r_target = *snaps.front().markets[i].rate_at_target;
                }
            }
        }
    }

    BacktestResult result;
    result.config = cfg;
    result.l_max = l;
    for (const auto& md : data.markets) result.market_ids.push_back(md.id);

    Allocation current;
    current.exposures.assign(n, 0.0);
    current.unleveraged = cfg.budget;
    current.lambda_star = snaps.front().staking_rate;

    for (std::size_t k = 0; k < snaps.size(); ++k) {
        const Snapshot& snap = snaps[k];
        if (k > 0) require(snap.timestamp > snaps[k - 1].timestamp, "snapshot timestamps must increase");
        const double equity = current.total();
        result.timestamps.push_back(snap.timestamp);
        result.equity_curve.push_back(equity);

        std::vector<IrmParams> irms;
        irms.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (controllers[i].active) {
                const PoolView pool(snap.markets[i], current.exposures[i] * m);
                controllers[i].state = advance_adaptive_rate(controllers[i].state, pool.utilization(), snap.timestamp);
                irms.push_back(controllers[i].state);
            } else if (staking_only) {
                irms.push_back(LinearIrm{});
            } else {
                irms.push_back(snapshot_irm(data.markets[i], snap.markets[i]));
            }
        }

        double fee = 0.0;
        const bool decision_step = (static_cast<std::int64_t>(k) % every == 0) && k + 1 < snaps.size();
        if (decision_step && !staking_only) {
            ProblemInstance p;
            p.staking_rate = snap.staking_rate;
            p.budget = equity;
            for (std::size_t i = 0; i < n; ++i) {
                const MarketSnapshot& ms = snap.markets[i];
                p.markets.push_back({MarketState(data.markets[i].id, ms.supplied, ms.borrowed, data.markets[i].lltv, irms[i]), l});
            }
            const RebalancePlan plan = solve_with_fees(p, current, cfg.fees);
            bool execute = plan.direction != Direction::hold;
            if (execute && cfg.strategy == StrategyKind::dynamic) {
                const double current_yield = detail::clamped_cash_flow(current, p);
                const double candidate = cfg.gate_net_of_cost ? current_yield + plan.net_gain_rate : plan.target.expected_yield;
                execute = should_rebalance(current_yield, candidate, equity, cfg.threshold);
            }
            if (execute) {
                current = plan.target;
                fee = plan.cost;
                ++result.rebalance_count;
                result.total_fees_paid += fee;
                if (fee > 0.0) {
                    const double scale = (equity - fee) / equity;
                    current.unleveraged *= scale;
                    for (double& x : current.exposures) x *= scale;
                }
            }
        }
        result.position_history.push_back(current);

        if (k + 1 == snaps.size()) break;

        const double dt = static_cast<double>(snaps[k + 1].timestamp - snap.timestamp) / kSecondsPerYear;
        const double s = snap.staking_rate;
        StepLedger ledger;
        ledger.fees = fee;
        ledger.staking_accrual = s * current.unleveraged * dt;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = current.exposures[i];
            if (x == 0.0) continue;
            const PoolView pool(snap.markets[i], x * m);
            const double rate = rate_at_utilization(irms[i], pool.utilization());
            const double stake = s * x * l * dt;
            const double interest = x * m * rate * dt;
            ledger.staking_accrual += stake;
            ledger.borrow_interest += interest;
            // Accrued carry stays in the sleeve at constant leverage.
            current.exposures[i] = x + (stake - interest);
        }
        current.unleveraged += s * current.unleveraged * dt;
        result.steps.push_back(ledger);
    }

    result.apy = apy(result.timestamps, result.equity_curve);
    return result;
}

std::vector<BudgetPoint> sweep_budgets(const SnapshotSeries& data, const BacktestConfig& cfg,
                                       const std::vector<double>& budgets) {
    require(!budgets.empty(), "budget list must not be empty");
    std::vector<std::future<double>> runs;
    runs.reserve(budgets.size());
    for (double b : budgets) {
        BacktestConfig c = cfg;
        c.budget = b;
        runs.push_back(std::async(std::launch::async, [&data, c] { return run_backtest(data, c).apy; }));
    }
    std::vector<BudgetPoint> curve;
    curve.reserve(budgets.size());
    for (std::size_t i = 0; i < budgets.size(); ++i) curve.push_back({budgets[i], runs[i].get()});
    return curve;
}

std::vector<LeverageCurve> sweep_leverage(const SnapshotSeries& data, const BacktestConfig& cfg,
                                          const std::vector<double>& l_max_values, const std::vector<double>& budgets) {
    require(!l_max_values.empty(), "l_max list must not be empty");
    std::vector<LeverageCurve> curves;
    for (double lm : l_max_values) {
        require(std::isfinite(lm) && lm >= 1.0, "l_max values must be at least 1");
        BacktestConfig c = cfg;
        c.l_max = lm;
        if (lm == 1.0) c.strategy = StrategyKind::staking_only;
        curves.push_back({lm, sweep_budgets(data, c, budgets)});
    }
    return curves;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
    require(count >= 1, "count must be positive");
    require(lo > 0.0 && hi >= lo, "log spacing needs 0 < lo <= hi");
    if (count == 1) return {lo};
    std::vector<double> v(count);
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (std::size_t i = 0; i < count; ++i) {
        v[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    v.front() = lo;
    v.back() = hi;
    return v;
}

}  // namespace loopy
