#pragma once

// Budget allocation across lending markets at per-market leverage caps plus
// one aggregated unleveraged staking position.

#include "loopy/irm.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace loopy {

struct MarketSlot {
    MarketState market;
    double l_max;
};

struct ProblemInstance {
    std::vector<MarketSlot> markets;
    double staking_rate = 0.0;
    double budget = 0.0;

    void validate() const;
    std::vector<double> leverage_caps() const;
};

enum class Regime { saturated, unsaturated };

const char* to_string(Regime regime) noexcept;

struct Allocation {
    std::vector<double> exposures;  // maximally-leveraged exposure per market
    double unleveraged = 0.0;
    double lambda_star = 0.0;
    double expected_yield = 0.0;
    Regime regime = Regime::saturated;

    double total() const noexcept;
};

// All budget in the unleveraged position.
Allocation pure_staking(const ProblemInstance& p);

// Every market at its lambda = s response. Empty when those responses
// exceed the budget.
std::optional<Allocation> solve_saturated(const ProblemInstance& p);

Allocation solve(const ProblemInstance& p);

struct WaterfillingSolution {
    Allocation allocation;
    std::vector<std::size_t> order;  // market indices by descending beta
    std::vector<double> alpha;       // per market, original order
    std::vector<double> beta;
    std::vector<double> phi;         // phi_1..phi_n along `order`
    std::size_t active_count = 0;    // k with phi_k < budget <= phi_{k+1}
};

// Closed-form solution for all-linear instances. Ignores liquidity caps and
// throws ConstraintError if the result would violate one.
WaterfillingSolution solve_waterfilling_linear(const ProblemInstance& p);

struct YieldBreakdown {
    double total = 0.0;
    double unlevered_base = 0.0;   // budget * s
    std::vector<double> carry;     // m_i x_i (s - rate_i)
    std::vector<double> borrow_rate;
};

YieldBreakdown yield_breakdown(const Allocation& alloc, const ProblemInstance& p);
double expected_yield(const Allocation& alloc, const ProblemInstance& p);

enum class BoundState { zero, interior, at_cap };

struct MarketKkt {
    BoundState state = BoundState::zero;
    Interval admissible;         // lambda values consistent with this market's optimality
    double residual = 0.0;       // distance from lambda_star to `admissible`
    bool satisfied = false;
};

struct KktReport {
    std::vector<MarketKkt> markets;
    double unleveraged_residual = 0.0;
    double budget_residual = 0.0;
    bool pass = false;

    double max_stationarity_residual() const noexcept;
};

KktReport verify_kkt(const Allocation& alloc, const ProblemInstance& p, double tol);

// Staking rate under which the lambda-FOC turns into the saturated FOC for a
// common leverage cap.
double effective_staking_rate(double lambda, double staking_rate, double l_max);

namespace detail {

// solve() without the s >= 0 check, for fee-adjusted staking rates.
Allocation solve_any_rate(const ProblemInstance& p);

// Cash flow with utilization clamped at 1, for positions that outgrew the pool.
double clamped_cash_flow(const Allocation& alloc, const ProblemInstance& p);

}  // namespace detail

}  // namespace loopy
