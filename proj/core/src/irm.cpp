#include "loopy/irm.hpp"

#include "loopy/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace loopy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Relative slack for utilization rounding at full pool and at the kink.
constexpr double kUtilizationSlack = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

bool finite(double v) { return std::isfinite(v); }

void check_u_star(double u_star) {
    require(finite(u_star) && u_star > 0.0 && u_star < 1.0, "u_star must lie in (0, 1)");
}

// Rate when the pool's total borrow equals `total`.
double rate_from_totals(const IrmParams& irm, double supplied, double total) {
    return std::visit(
        overloaded{
            [&](const LinearIrm& p) { return p.r_base + total / (supplied * p.u_star) * p.r_slope1; },
            [&](const KinkedIrm& p) {
                const double target = supplied * p.u_star;
                if (total < target) return p.r_base + total / target * p.r_slope1;
                return p.r_base + p.r_slope1 + (total - target) / (supplied * (1.0 - p.u_star)) * p.r_slope2;
            },
            [&](const AdaptiveIrm& p) {
                const double target = supplied * p.u_star;
                if (total < target) return p.r_target * (1.0 + (1.0 - 1.0 / p.k_d) * (total - target) / target);
                return p.r_target * (1.0 + (p.k_d - 1.0) * (total - target) / (supplied * (1.0 - p.u_star)));
            },
        },
        irm);
}

void check_pool(double supplied, double borrowed) {
    require(finite(supplied) && supplied > 0.0, "supplied must be positive");
    require(finite(borrowed) && borrowed >= 0.0, "borrowed must be non-negative");
}

// Total borrow after adding own_borrow, clamped to the pool size when it
// overshoots only by rounding.
double checked_total(double supplied, double borrowed, double own_borrow) {
    require(finite(own_borrow) && own_borrow >= 0.0, "borrow amount must be non-negative");
    const double total = borrowed + own_borrow;
    if (total > supplied * (1.0 + kUtilizationSlack)) {
        std::ostringstream msg;
        msg << "utilization " << total / supplied << " exceeds 1";
        throw LiquidityError(msg.str());
    }
    return std::min(total, supplied);
}

void check_leverage_cap(const MarketState& market, double l_max) {
    require(finite(l_max) && l_max > 1.0, "l_max must exceed 1");
    const double bound = 1.0 / (1.0 - market.max_ltv());
    if (l_max > bound * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "l_max " << l_max << " exceeds the LTV bound " << bound << " of market " << market.market_id();
        throw ConstraintError(msg.str());
    }
}

double alpha_or_inf(double numerator, double slope, double m) {
    return slope > 0.0 ? numerator / (2.0 * slope * m * m) : kInf;
}

// alpha * [beta - lambda]^+ as a one-sided range, allowing alpha == inf.
Interval affine_branch(double alpha, double beta, double lambda, double cap) {
    if (std::isinf(alpha)) {
        if (lambda < beta) return {cap, cap};
        if (lambda == beta) return {0.0, cap};
        return {0.0, 0.0};
    }
    const double v = std::min(cap, alpha * std::max(0.0, beta - lambda));
    return {v, v};
}

}  // namespace

void LinearIrm::validate() const {
    require(finite(r_base) && r_base >= 0.0, "r_base must be non-negative");
    require(finite(r_slope1) && r_slope1 >= 0.0, "r_slope1 must be non-negative");
    check_u_star(u_star);
}

void KinkedIrm::validate() const {
    require(finite(r_base) && r_base >= 0.0, "r_base must be non-negative");
    require(finite(r_slope1) && r_slope1 >= 0.0, "r_slope1 must be non-negative");
    require(finite(r_slope2) && r_slope2 >= 0.0, "r_slope2 must be non-negative");
    check_u_star(u_star);
    require(r_slope1 < u_star / (1.0 - u_star) * r_slope2,
            "kinked model requires r_slope1 < u_star / (1 - u_star) * r_slope2");
}

void AdaptiveIrm::validate() const {
    require(finite(r_target) && r_target > 0.0, "r_target must be positive");
    require(finite(k_d) && k_d > 1.0, "k_d must exceed 1");
    check_u_star(u_star);
    require((1.0 - u_star) / u_star < k_d, "adaptive model requires (1 - u_star) / u_star < k_d");
    require(finite(k_p) && k_p > 0.0, "k_p must be positive");
    require(finite(u_last) && u_last >= 0.0 && u_last <= 1.0, "u_last must lie in [0, 1]");
}

void validate(const IrmParams& irm) {
    std::visit([](const auto& p) { p.validate(); }, irm);
}

std::string model_name(const IrmParams& irm) {
    return std::visit(overloaded{
                          [](const LinearIrm&) { return std::string("linear"); },
                          [](const KinkedIrm&) { return std::string("kinked"); },
                          [](const AdaptiveIrm&) { return std::string("adaptive"); },
                      },
                      irm);
}

MarketState::MarketState(std::string market_id, double supplied, double borrowed, double max_ltv, IrmParams irm)
    : market_id_(std::move(market_id)), supplied_(supplied), borrowed_(borrowed), max_ltv_(max_ltv),
      irm_(std::move(irm)) {
    require(finite(supplied_) && supplied_ > 0.0, "market " + market_id_ + ": supplied must be positive");
    require(finite(borrowed_) && borrowed_ >= 0.0, "market " + market_id_ + ": borrowed must be non-negative");
    require(borrowed_ <= supplied_, "market " + market_id_ + ": borrowed exceeds supplied");
    require(finite(max_ltv_) && max_ltv_ > 0.0 && max_ltv_ < 1.0, "market " + market_id_ + ": max_ltv must lie in (0, 1)");
    validate(irm_);
}

double adaptive_error(double u, double u_star) {
    if (u < u_star) return (u - u_star) / u_star;
    return (u - u_star) / (1.0 - u_star);
}

double adaptive_curve(double u, double u_star, double k_d) {
    const double err = adaptive_error(u, u_star);
    if (u < u_star) return (1.0 - 1.0 / k_d) * err + 1.0;
    return (k_d - 1.0) * err + 1.0;
}

KinkedIrm adaptive_as_kinked(double r_target, double k_d, double u_star) {
    return KinkedIrm{r_target / k_d, r_target * (1.0 - 1.0 / k_d), r_target * (k_d - 1.0), u_star};
}

KinkedIrm to_kinked(const AdaptiveIrm& irm) { return adaptive_as_kinked(irm.r_target, irm.k_d, irm.u_star); }

double rate_at_utilization(const IrmParams& irm, double utilization) {
    require(finite(utilization) && utilization >= 0.0 && utilization <= 1.0, "utilization must lie in [0, 1]");
    return std::visit(overloaded{
                          [&](const LinearIrm& p) { return p.r_base + utilization / p.u_star * p.r_slope1; },
                          [&](const KinkedIrm& p) {
                              if (utilization < p.u_star) return p.r_base + utilization / p.u_star * p.r_slope1;
                              return p.r_base + p.r_slope1 + (utilization - p.u_star) / (1.0 - p.u_star) * p.r_slope2;
                          },
                          [&](const AdaptiveIrm& p) { return p.r_target * adaptive_curve(utilization, p.u_star, p.k_d); },
                      },
                      irm);
}

double borrow_rate(const IrmParams& irm, double supplied, double borrowed, double delta_borrow) {
    validate(irm);
    check_pool(supplied, borrowed);
    const double total = checked_total(supplied, borrowed, delta_borrow);
    return rate_from_totals(irm, supplied, total);
}

Interval marginal_cost_subgradient(const IrmParams& irm, double supplied, double borrowed, double own_borrow) {
    validate(irm);
    check_pool(supplied, borrowed);
    const double total = checked_total(supplied, borrowed, own_borrow);
    const double b = own_borrow;

    if (const auto* lin = std::get_if<LinearIrm>(&irm)) {
        const double v = lin->r_base + (borrowed + 2.0 * b) * lin->r_slope1 / (supplied * lin->u_star);
        return {v, v};
    }
    const KinkedIrm k = std::holds_alternative<KinkedIrm>(irm) ? std::get<KinkedIrm>(irm)
                                                               : to_kinked(std::get<AdaptiveIrm>(irm));
    const double target = supplied * k.u_star;
    const double upper_slope = k.r_slope2 / (supplied * (1.0 - k.u_star));
    const double lower = k.r_base + (borrowed + 2.0 * b) * k.r_slope1 / target;
    const double upper = k.r_base + k.r_slope1 + (total - target) * upper_slope + b * upper_slope;

    if (std::abs(total - target) <= kUtilizationSlack * supplied) {
        return {std::min(lower, upper), std::max(lower, upper)};
    }
    if (total < target) return {lower, lower};
    return {upper, upper};
}

double liquidity_headroom(const MarketState& market, double l_max) {
    check_leverage_cap(market, l_max);
    return (market.supplied() - market.borrowed()) / (l_max - 1.0);
}

ResponseCoefficients response_coefficients(const MarketState& market, double l_max, double staking_rate) {
    check_leverage_cap(market, l_max);
    require(finite(staking_rate), "staking rate must be finite");
    const double S = market.supplied();
    const double Bbar = market.borrowed();
    const double m = l_max - 1.0;
    const double carry_base = l_max * staking_rate;

    ResponseCoefficients c;
    std::visit(
        overloaded{
            [&](const LinearIrm& p) {
                const double target = S * p.u_star;
                c.alpha1 = alpha_or_inf(target, p.r_slope1, m);
                c.beta1 = carry_base - m * (p.r_base + Bbar / target * p.r_slope1);
            },
            [&](const KinkedIrm& p) {
                const double target = S * p.u_star;
                const double upper = S * (1.0 - p.u_star);
                c.two_slope = true;
                c.below_target = target - Bbar > 0.0;
                c.alpha1 = alpha_or_inf(target, p.r_slope1, m);
                c.beta1 = carry_base - m * (p.r_base + Bbar / target * p.r_slope1);
                c.alpha2 = alpha_or_inf(upper, p.r_slope2, m);
                c.beta2 = carry_base - m * (p.r_base + p.r_slope1 + (Bbar - target) / upper * p.r_slope2);
                if (c.below_target) {
                    c.lambda1 = carry_base - m * (p.r_base + p.r_slope1 + (target - Bbar) * p.r_slope1 / target);
                    c.lambda2 = carry_base - m * (p.r_base + p.r_slope1 + (target - Bbar) * p.r_slope2 / upper);
                    c.kink_exposure = (target - Bbar) / m;
                } else {
                    c.lambda1 = c.lambda2 = c.beta2;
                }
            },
            [&](const AdaptiveIrm& p) {
                const double target = S * p.u_star;
                const double upper = S * (1.0 - p.u_star);
                const double rt = p.r_target;
                const double kd = p.k_d;
                c.two_slope = true;
                c.below_target = target - Bbar > 0.0;
                c.alpha1 = target / (2.0 * rt * (1.0 - 1.0 / kd) * m * m);
                c.beta1 = carry_base - m * rt * (1.0 / kd + Bbar / target * (1.0 - 1.0 / kd));
                c.alpha2 = upper / (2.0 * rt * (kd - 1.0) * m * m);
                c.beta2 = carry_base - m * rt * (1.0 + (Bbar - target) / upper * (kd - 1.0));
                if (c.below_target) {
                    c.lambda1 = carry_base - m * rt * (1.0 + (target - Bbar) * (1.0 - 1.0 / kd) / target);
                    c.lambda2 = carry_base - m * rt * (1.0 + (target - Bbar) * (kd - 1.0) / upper);
                    c.kink_exposure = (target - Bbar) / m;
                } else {
                    c.lambda1 = c.lambda2 = c.beta2;
                }
            },
        },
        market.irm());
    return c;
}

Interval response_range(const MarketState& market, double l_max, double staking_rate, double lambda) {
    require(finite(lambda), "lambda must be finite");
    const ResponseCoefficients c = response_coefficients(market, l_max, staking_rate);
    const double cap = liquidity_headroom(market, l_max);

    if (!c.two_slope) return affine_branch(c.alpha1, c.beta1, lambda, cap);
    if (!c.below_target) return affine_branch(c.alpha2, c.beta2, lambda, cap);

    // alpha2 is finite for every valid two-slope market (r_slope2 > 0).
    if (lambda < c.lambda2) {
        const double v = std::min(cap, c.alpha2 * (c.beta2 - lambda));
        return {v, v};
    }
    const double kink = std::min(cap, c.kink_exposure);
    if (lambda < c.lambda1) return {kink, kink};
    if (lambda == c.lambda1) {
        if (std::isinf(c.alpha1)) return {0.0, kink};
        return {kink, kink};
    }
    if (std::isinf(c.alpha1)) return {0.0, 0.0};
    const double v = std::min(cap, c.alpha1 * std::max(0.0, c.beta1 - lambda));
    return {v, v};
}

double market_response(const MarketState& market, double l_max, double staking_rate, double lambda) {
    return response_range(market, l_max, staking_rate, lambda).lo;
}

std::vector<double> response_breakpoints(const MarketState& market, double l_max, double staking_rate) {
    const ResponseCoefficients c = response_coefficients(market, l_max, staking_rate);
    std::vector<double> points;
    if (!c.two_slope) {
        points = {c.beta1};
    } else if (c.below_target) {
        points = {c.beta1, c.lambda1, c.lambda2};
    } else {
        points = {c.beta2};
    }
    std::sort(points.begin(), points.end(), std::greater<>());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return points;
}

double liquidity_cap_breakpoint(const MarketState& market, double l_max, double staking_rate) {
    const ResponseCoefficients c = response_coefficients(market, l_max, staking_rate);
    const double cap = liquidity_headroom(market, l_max);
    if (cap <= 0.0) return kInf;
    const double alpha = c.two_slope ? c.alpha2 : c.alpha1;
    const double beta = c.two_slope ? c.beta2 : c.beta1;
    if (std::isinf(alpha)) return beta;
    return beta - cap / alpha;
}

AdaptiveIrm advance_adaptive_rate(const AdaptiveIrm& irm, double u_now, Timestamp t_now) {
    irm.validate();
    require(finite(u_now) && u_now >= 0.0 && u_now <= 1.0, "u_now must lie in [0, 1]");
    if (t_now < irm.t_last) throw DomainError("adaptive rate cannot be advanced backwards in time");
    const double elapsed_years = static_cast<double>(t_now - irm.t_last) / kSecondsPerYear;
    AdaptiveIrm next = irm;
    next.r_target = irm.r_target * std::exp(irm.k_p * adaptive_error(irm.u_last, irm.u_star) * elapsed_years);
    next.t_last = t_now;
    next.u_last = u_now;
    return next;
}

}  // namespace loopy
