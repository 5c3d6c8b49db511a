#pragma once

// Fee-aware rebalancing with proportional fees on changes in total collateral.

#include "loopy/allocator.hpp"

#include <span>

namespace loopy {

struct FeeModel {
    double gamma_plus = 0.0;         // fee rate when total collateral increases
    double gamma_minus = 0.0;        // fee rate when it decreases or stays equal
    double horizon_T = 1.0 / 365.0;  // years

    void validate() const;
};

enum class Direction { increase, decrease, hold };

const char* to_string(Direction direction) noexcept;

struct RebalancePlan {
    Allocation target;
    double cost = 0.0;
    Direction direction = Direction::hold;
    double net_gain_rate = 0.0;  // yield(target) - yield(current) - cost / T
};

double total_collateral(const Allocation& alloc, std::span<const double> l_max);

double rebalance_cost(const Allocation& next, const Allocation& current, const FeeModel& fees,
                      std::span<const double> l_max);

RebalancePlan solve_with_fees(const ProblemInstance& p, const Allocation& current, const FeeModel& fees);

// (candidate_yield - current_yield) / budget > threshold, strictly.
bool should_rebalance(double current_yield, double candidate_yield, double budget, double threshold);

}  // namespace loopy
