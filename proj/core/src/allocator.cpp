#include "loopy/allocator.hpp"

#include "loopy/errors.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace loopy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_structure(const ProblemInstance& p) {
    if (!std::isfinite(p.budget) || p.budget <= 0.0) throw DomainError("budget must be positive");
    if (!std::isfinite(p.staking_rate)) throw DomainError("staking rate must be finite");
    for (const auto& slot : p.markets) {
        // Throws on an out-of-range cap.
        (void)liquidity_headroom(slot.market, slot.l_max);
    }
}

struct ResponseSums {
    double lo = 0.0;
    double hi = 0.0;
};

ResponseSums response_sums(const ProblemInstance& p, double lambda) {
    ResponseSums sums;
    for (const auto& slot : p.markets) {
        const Interval r = response_range(slot.market, slot.l_max, p.staking_rate, lambda);
        sums.lo += r.lo;
        sums.hi += r.hi;
    }
    return sums;
}

std::vector<double> responses_at(const ProblemInstance& p, double lambda) {
    std::vector<double> x;
    x.reserve(p.markets.size());
    for (const auto& slot : p.markets) x.push_back(market_response(slot.market, slot.l_max, p.staking_rate, lambda));
    return x;
}

// Splits budget left over by the lower selection across markets whose
// response jumps at lambda, proportionally to their jump size.
std::vector<double> fill_jumps(const ProblemInstance& p, double lambda, double budget) {
    std::vector<double> x;
    std::vector<double> jump;
    double lo_sum = 0.0;
    double jump_sum = 0.0;
    for (const auto& slot : p.markets) {
        const Interval r = response_range(slot.market, slot.l_max, p.staking_rate, lambda);
        x.push_back(r.lo);
        jump.push_back(r.hi - r.lo);
        lo_sum += r.lo;
        jump_sum += r.hi - r.lo;
    }
    if (jump_sum > 0.0) {
        const double share = std::clamp((budget - lo_sum) / jump_sum, 0.0, 1.0);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += share * jump[i];
    }
    return x;
}

void fold_residual(std::vector<double>& x, double budget) {
    if (x.empty()) return;
    const double residual = budget - std::accumulate(x.begin(), x.end(), 0.0);
    auto largest = std::max_element(x.begin(), x.end());
    if (*largest > 0.0) *largest = std::max(0.0, *largest + residual);
}

double find_multiplier(const ProblemInstance& p) {
    const double s = p.staking_rate;
    const double budget = p.budget;

    std::vector<double> points;
    for (const auto& slot : p.markets) {
        for (double bp : response_breakpoints(slot.market, slot.l_max, s)) {
            if (bp > s) points.push_back(bp);
        }
    }
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());

    double prev = s;
    double prev_lo = response_sums(p, s).lo;
    for (double bp : points) {
        const ResponseSums at = response_sums(p, bp);
        if (at.lo > budget) {
            prev = bp;
            prev_lo = at.lo;
            continue;
        }
        if (at.hi >= budget) return bp;

        // Affine between breakpoints unless a liquidity cap kinks the segment.
        const double guess = prev + (prev_lo - budget) / (prev_lo - at.hi) * (bp - prev);
        if (std::abs(response_sums(p, guess).lo - budget) <= 1e-10 * budget) return guess;

        auto f = [&](double lambda) { return response_sums(p, lambda).lo - budget; };
        std::uintmax_t max_iter = 200;
        const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-14 * std::max(1.0, std::abs(a)); };
        const auto bracket = boost::math::tools::toms748_solve(f, prev, bp, prev_lo - budget, at.lo - budget, tol, max_iter);
        return 0.5 * (bracket.first + bracket.second);
    }
    // Unreachable for valid instances: every response vanishes at the top breakpoint.
    throw std::logic_error("multiplier search failed to bracket the budget");
}

Allocation finish(const ProblemInstance& p, std::vector<double> x, double x0, double lambda, Regime regime) {
    Allocation a;
    a.exposures = std::move(x);
    a.unleveraged = x0;
    a.lambda_star = lambda;
    a.regime = regime;
    a.expected_yield = detail::clamped_cash_flow(a, p);
    return a;
}

std::optional<Allocation> saturated_unchecked(const ProblemInstance& p) {
    std::vector<double> x = responses_at(p, p.staking_rate);
    const double used = std::accumulate(x.begin(), x.end(), 0.0);
    if (used > p.budget) return std::nullopt;
    return finish(p, std::move(x), p.budget - used, p.staking_rate, Regime::saturated);
}

}  // namespace

void ProblemInstance::validate() const {
    validate_structure(*this);
    if (staking_rate < 0.0) throw DomainError("staking rate must be non-negative");
}

std::vector<double> ProblemInstance::leverage_caps() const {
    std::vector<double> caps;
    caps.reserve(markets.size());
    for (const auto& slot : markets) caps.push_back(slot.l_max);
    return caps;
}

const char* to_string(Regime regime) noexcept {
    return regime == Regime::saturated ? "saturated" : "unsaturated";
}

double Allocation::total() const noexcept {
    return unleveraged + std::accumulate(exposures.begin(), exposures.end(), 0.0);
}

Allocation pure_staking(const ProblemInstance& p) {
    validate_structure(p);
    return finish(p, std::vector<double>(p.markets.size(), 0.0), p.budget, p.staking_rate, Regime::saturated);
}

std::optional<Allocation> solve_saturated(const ProblemInstance& p) {
    p.validate();
    return saturated_unchecked(p);
}

Allocation solve(const ProblemInstance& p) {
    p.validate();
    return detail::solve_any_rate(p);
}

namespace detail {

Allocation solve_any_rate(const ProblemInstance& p) {
    validate_structure(p);
    if (auto sat = saturated_unchecked(p)) return *sat;

    const double lambda = find_multiplier(p);
    std::vector<double> x = fill_jumps(p, lambda, p.budget);
    fold_residual(x, p.budget);
    return finish(p, std::move(x), 0.0, lambda, Regime::unsaturated);
}

double clamped_cash_flow(const Allocation& alloc, const ProblemInstance& p) {
    double flow = alloc.unleveraged * p.staking_rate;
    for (std::size_t i = 0; i < p.markets.size(); ++i) {
        const auto& slot = p.markets[i];
        const double x = alloc.exposures[i];
        if (x == 0.0) continue;
        const double m = slot.l_max - 1.0;
        const MarketState& mk = slot.market;
        const double own = std::min(x * m, mk.supplied() - mk.borrowed());
        const double rate = borrow_rate(mk.irm(), mk.supplied(), mk.borrowed(), std::max(0.0, own));
        flow += x * slot.l_max * p.staking_rate - x * m * rate;
    }
    return flow;
}

}  // namespace detail

WaterfillingSolution solve_waterfilling_linear(const ProblemInstance& p) {
    p.validate();
    const std::size_t n = p.markets.size();
    const double s = p.staking_rate;

    WaterfillingSolution sol;
    sol.alpha.resize(n);
    sol.beta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& slot = p.markets[i];
        const auto* lin = std::get_if<LinearIrm>(&slot.market.irm());
        if (lin == nullptr) {
            throw UnsupportedModelError("water-filling requires linear rate models; market " +
                                        slot.market.market_id() + " uses " + model_name(slot.market.irm()));
        }
        if (!(lin->r_slope1 > 0.0)) throw DomainError("water-filling requires r_slope1 > 0");
        const ResponseCoefficients c = response_coefficients(slot.market, slot.l_max, s);
        sol.alpha[i] = c.alpha1;
        sol.beta[i] = c.beta1;
    }

    sol.order.resize(n);
    std::iota(sol.order.begin(), sol.order.end(), std::size_t{0});
    std::stable_sort(sol.order.begin(), sol.order.end(), [&](std::size_t a, std::size_t b) {
        if (sol.beta[a] != sol.beta[b]) return sol.beta[a] > sol.beta[b];
        return p.markets[a].market.market_id() < p.markets[b].market.market_id();
    });

    sol.phi.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double level = sol.beta[sol.order[k]];
        double phi = 0.0;
        for (std::size_t j = 0; j <= k; ++j) phi += sol.alpha[sol.order[j]] * (sol.beta[sol.order[j]] - level);
        sol.phi[k] = phi;
    }

    std::vector<double> x(n, 0.0);
    double saturated_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) saturated_total += sol.alpha[i] * std::max(0.0, sol.beta[i] - s);

    Allocation& a = sol.allocation;
    if (n == 0 || saturated_total <= p.budget) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = sol.alpha[i] * std::max(0.0, sol.beta[i] - s);
            if (sol.beta[i] > s) ++sol.active_count;
        }
        a.unleveraged = p.budget - saturated_total;
        a.lambda_star = s;
        a.regime = Regime::saturated;
    } else {
        std::size_t k = 0;
        while (k < n && sol.phi[k] < p.budget) ++k;
        sol.active_count = k;
        double alpha_sum = 0.0;
        double alpha_beta_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            alpha_sum += sol.alpha[sol.order[j]];
            alpha_beta_sum += sol.alpha[sol.order[j]] * sol.beta[sol.order[j]];
        }
        const double lambda = (alpha_beta_sum - p.budget) / alpha_sum;
        for (std::size_t i = 0; i < n; ++i) x[i] = sol.alpha[i] * std::max(0.0, sol.beta[i] - lambda);
        a.unleveraged = 0.0;
        a.lambda_star = lambda;
        a.regime = Regime::unsaturated;
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& slot = p.markets[i];
        if (x[i] > liquidity_headroom(slot.market, slot.l_max) * (1.0 + 1e-12)) {
            throw ConstraintError("water-filling solution exceeds the liquidity of market " + slot.market.market_id());
        }
    }
    a.exposures = std::move(x);
    a.expected_yield = detail::clamped_cash_flow(a, p);
    return sol;
}

YieldBreakdown yield_breakdown(const Allocation& alloc, const ProblemInstance& p) {
    validate_structure(p);
    const std::size_t n = p.markets.size();
    if (alloc.exposures.size() != n) throw DomainError("allocation and instance disagree on market count");
    if (!(alloc.unleveraged >= 0.0)) throw ConstraintError("unleveraged exposure is negative");
    if (std::abs(alloc.total() - p.budget) > 1e-9 * p.budget) {
        std::ostringstream msg;
        msg << "allocation total " << alloc.total() << " does not match budget " << p.budget;
        throw ConstraintError(msg.str());
    }

    YieldBreakdown y;
    y.unlevered_base = alloc.total() * p.staking_rate;
    y.total = y.unlevered_base;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& slot = p.markets[i];
        const double x = alloc.exposures[i];
        if (!(x >= 0.0)) throw ConstraintError("exposure in market " + slot.market.market_id() + " is negative");
        if (x > liquidity_headroom(slot.market, slot.l_max) * (1.0 + 1e-12)) {
            throw ConstraintError("exposure in market " + slot.market.market_id() + " exceeds available liquidity");
        }
        const double m = slot.l_max - 1.0;
        const double rate = borrow_rate(slot.market.irm(), slot.market.supplied(), slot.market.borrowed(), x * m);
        const double carry = m * x * (p.staking_rate - rate);
        y.carry.push_back(carry);
        y.borrow_rate.push_back(rate);
        y.total += carry;
    }
    return y;
}

double expected_yield(const Allocation& alloc, const ProblemInstance& p) { return yield_breakdown(alloc, p).total; }

double KktReport::max_stationarity_residual() const noexcept {
    double worst = unleveraged_residual;
    for (const auto& m : markets) worst = std::max(worst, m.residual);
    return worst;
}

KktReport verify_kkt(const Allocation& alloc, const ProblemInstance& p, double tol) {
    validate_structure(p);
    const std::size_t n = p.markets.size();
    if (alloc.exposures.size() != n) throw DomainError("allocation and instance disagree on market count");

    const double lambda = alloc.lambda_star;
    const double s = p.staking_rate;
    KktReport report;
    report.pass = true;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& slot = p.markets[i];
        const MarketState& mk = slot.market;
        const double l = slot.l_max;
        const double m = l - 1.0;
        const double x = alloc.exposures[i];
        const double cap = liquidity_headroom(mk, l);

        MarketKkt entry;
        if (!(x >= 0.0) || x > cap * (1.0 + 1e-12)) {
            entry.residual = kInf;
            entry.admissible = {kInf, -kInf};
        } else if (cap <= 0.0) {
            entry.state = BoundState::at_cap;
            entry.admissible = {-kInf, kInf};
        } else {
            const double own = std::min(x * m, mk.supplied() - mk.borrowed());
            const Interval sub = marginal_cost_subgradient(mk.irm(), mk.supplied(), mk.borrowed(), own);
            const Interval value{l * s - m * sub.hi, l * s - m * sub.lo};
            if (x == 0.0) {
                entry.state = BoundState::zero;
                entry.admissible = {value.lo, kInf};
            } else if (x >= cap * (1.0 - 1e-12)) {
                entry.state = BoundState::at_cap;
                entry.admissible = {-kInf, value.hi};
            } else {
                entry.state = BoundState::interior;
                entry.admissible = value;
            }
            if (lambda < entry.admissible.lo) entry.residual = entry.admissible.lo - lambda;
            else if (lambda > entry.admissible.hi) entry.residual = lambda - entry.admissible.hi;
        }
        entry.satisfied = entry.residual <= tol;
        report.pass = report.pass && entry.satisfied;
        report.markets.push_back(entry);
    }

    if (!(alloc.unleveraged >= 0.0)) {
        report.unleveraged_residual = kInf;
    } else if (alloc.unleveraged > 0.0) {
        report.unleveraged_residual = std::abs(lambda - s);
    } else {
        report.unleveraged_residual = std::max(0.0, s - lambda);
    }
    report.pass = report.pass && report.unleveraged_residual <= tol;

    report.budget_residual = std::abs(alloc.total() - p.budget);
    report.pass = report.pass && report.budget_residual <= tol * p.budget;
    return report;
}

double effective_staking_rate(double lambda, double staking_rate, double l_max) {
    if (!(l_max > 1.0)) throw DomainError("l_max must exceed 1");
    return staking_rate + (staking_rate - lambda) / (l_max - 1.0);
}

}  // namespace loopy
