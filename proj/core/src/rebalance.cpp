#include "loopy/rebalance.hpp"

#include "loopy/errors.hpp"

#include <cmath>
#include <sstream>

namespace loopy {
namespace {

bool same_position(const Allocation& a, const Allocation& b, double scale) {
    const double tol = 1e-12 * scale;
    if (std::abs(a.unleveraged - b.unleveraged) > tol) return false;
    for (std::size_t i = 0; i < a.exposures.size(); ++i) {
        if (std::abs(a.exposures[i] - b.exposures[i]) > tol) return false;
    }
    return true;
}

Allocation solve_at_rate(const ProblemInstance& p, double rate) {
    ProblemInstance shifted = p;
    shifted.staking_rate = rate;
    Allocation a = detail::solve_any_rate(shifted);
    a.expected_yield = detail::clamped_cash_flow(a, p);
    return a;
}

}  // namespace

void FeeModel::validate() const {
    if (!(std::isfinite(gamma_plus) && gamma_plus >= 0.0 && gamma_plus < 1.0)) {
        throw DomainError("gamma_plus must lie in [0, 1)");
    }
    if (!(std::isfinite(gamma_minus) && gamma_minus >= 0.0 && gamma_minus < 1.0)) {
        throw DomainError("gamma_minus must lie in [0, 1)");
    }
    if (!(std::isfinite(horizon_T) && horizon_T > 0.0)) throw DomainError("horizon_T must be positive");
}

const char* to_string(Direction direction) noexcept {
    switch (direction) {
        case Direction::increase: return "increase";
        case Direction::decrease: return "decrease";
        case Direction::hold: return "hold";
    }
    return "hold";
}

double total_collateral(const Allocation& alloc, std::span<const double> l_max) {
    if (alloc.exposures.size() != l_max.size()) throw DomainError("allocation and leverage caps disagree on market count");
    double total = alloc.unleveraged;
    for (std::size_t i = 0; i < l_max.size(); ++i) total += alloc.exposures[i] * l_max[i];
    return total;
}

double rebalance_cost(const Allocation& next, const Allocation& current, const FeeModel& fees,
                      std::span<const double> l_max) {
    fees.validate();
    if (next.exposures.size() != current.exposures.size()) {
        throw DomainError("allocations disagree on market count");
    }
    const double delta = total_collateral(next, l_max) - total_collateral(current, l_max);
    const double gamma = delta > 0.0 ? fees.gamma_plus : fees.gamma_minus;
    return gamma * std::abs(delta);
}

RebalancePlan solve_with_fees(const ProblemInstance& p, const Allocation& current, const FeeModel& fees) {
    p.validate();
    fees.validate();
    if (current.exposures.size() != p.markets.size()) {
        throw DomainError("current allocation and instance disagree on market count");
    }
    if (std::abs(current.total() - p.budget) > 1e-9 * p.budget) {
        std::ostringstream msg;
        msg << "current allocation total " << current.total() << " does not match budget " << p.budget;
        throw DomainError(msg.str());
    }

    const std::vector<double> caps = p.leverage_caps();
    const double current_collateral = total_collateral(current, caps);
    const double current_yield = detail::clamped_cash_flow(current, p);

    RebalancePlan plan;
    plan.target = current;
    plan.target.expected_yield = current_yield;

    Allocation up = solve_at_rate(p, p.staking_rate - fees.gamma_plus / fees.horizon_T);
    if (total_collateral(up, caps) > current_collateral) {
        plan.target = std::move(up);
        plan.direction = Direction::increase;
    } else {
        Allocation down = solve_at_rate(p, p.staking_rate + fees.gamma_minus / fees.horizon_T);
        if (total_collateral(down, caps) <= current_collateral) {
            plan.target = std::move(down);
            plan.direction = Direction::decrease;
        }
    }

    if (plan.direction != Direction::hold && same_position(plan.target, current, p.budget)) {
        plan.target = current;
        plan.target.expected_yield = current_yield;
        plan.direction = Direction::hold;
    }
    if (plan.direction == Direction::hold) return plan;

    plan.cost = rebalance_cost(plan.target, current, fees, caps);
    plan.net_gain_rate = plan.target.expected_yield - current_yield - plan.cost / fees.horizon_T;
    return plan;
}

bool should_rebalance(double current_yield, double candidate_yield, double budget, double threshold) {
    if (!(std::isfinite(budget) && budget > 0.0)) throw DomainError("budget must be positive");
    if (!(threshold >= 0.0)) throw DomainError("threshold must be non-negative");
    return (candidate_yield - current_yield) / budget > threshold;
}

}  // namespace loopy
