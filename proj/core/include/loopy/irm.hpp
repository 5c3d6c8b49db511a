#pragma once

// Interest-rate models for utilization-priced lending pools and the
// per-market optimal leveraged exposure each one induces.
//
// Rates are continuously compounded annual fractions (0.03 == 3%/year).
// Monetary quantities share one numeraire per problem instance.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace loopy {

using Timestamp = std::int64_t;  // UTC seconds

inline constexpr double kSecondsPerYear = 365.0 * 24.0 * 3600.0;

struct LinearIrm {
    double r_base = 0.0;
    double r_slope1 = 0.0;
    double u_star = 0.9;

    void validate() const;
};

// Two-slope model; the upper branch applies from u_star inclusive.
struct KinkedIrm {
    double r_base = 0.0;
    double r_slope1 = 0.0;
    double r_slope2 = 0.0;
    double u_star = 0.9;

    // Requires r_slope1 < u_star / (1 - u_star) * r_slope2.
    void validate() const;
};

// Adaptive curve model: rate(u, t) = r_target(t) * curve(u), where the
// controller state r_target drifts exponentially with the utilization error.
struct AdaptiveIrm {
    double r_target = 0.04;
    double k_d = 4.0;
    double u_star = 0.9;
    double k_p = 0.0;  // 1/year; no default value, must be configured
    Timestamp t_last = 0;
    double u_last = 0.9;

    void validate() const;
};

using IrmParams = std::variant<LinearIrm, KinkedIrm, AdaptiveIrm>;

void validate(const IrmParams& irm);
std::string model_name(const IrmParams& irm);

class MarketState {
public:
    MarketState(std::string market_id, double supplied, double borrowed, double max_ltv, IrmParams irm);

    const std::string& market_id() const noexcept { return market_id_; }
    double supplied() const noexcept { return supplied_; }
    double borrowed() const noexcept { return borrowed_; }
    double max_ltv() const noexcept { return max_ltv_; }
    const IrmParams& irm() const noexcept { return irm_; }
    double utilization() const noexcept { return borrowed_ / supplied_; }

private:
    std::string market_id_;
    double supplied_;
    double borrowed_;
    double max_ltv_;
    IrmParams irm_;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool degenerate() const noexcept { return lo == hi; }
    bool contains(double v, double tol = 0.0) const noexcept { return v >= lo - tol && v <= hi + tol; }
};

// Normalized distance to target utilization: -1 at u = 0, 0 at u*, +1 at u = 1.
double adaptive_error(double u, double u_star);
double adaptive_curve(double u, double u_star, double k_d);

// Static reparametrization of the adaptive curve as a kinked model:
// r_base = r_target / k_d, r_slope1 = r_target (1 - 1/k_d), r_slope2 = r_target (k_d - 1).
KinkedIrm to_kinked(const AdaptiveIrm& irm);
KinkedIrm adaptive_as_kinked(double r_target, double k_d, double u_star);

double rate_at_utilization(const IrmParams& irm, double utilization);

// Rate after borrowing delta_borrow on top of the pool's existing borrow.
double borrow_rate(const IrmParams& irm, double supplied, double borrowed, double delta_borrow);

// Subdifferential of g(B) = B * rate(B) at our own borrow B; degenerate
// wherever the rate is differentiable.
Interval marginal_cost_subgradient(const IrmParams& irm, double supplied, double borrowed, double own_borrow);

// Largest exposure at leverage l_max that keeps utilization <= 1.
double liquidity_headroom(const MarketState& market, double l_max);

// Optimal maximally-leveraged exposure x*(lambda) for one market.
double market_response(const MarketState& market, double l_max, double staking_rate, double lambda);

// One-sided limits [x*(lambda+), x*(lambda-)]. Non-degenerate only at a jump
// of the response, which requires a zero slope on the active branch.
Interval response_range(const MarketState& market, double l_max, double staking_rate, double lambda);

// Multipliers where x*(lambda) changes analytic form, sorted descending. The
// liquidity cap may add one more kink, see liquidity_cap_breakpoint.
std::vector<double> response_breakpoints(const MarketState& market, double l_max, double staking_rate);

// Multiplier below which the liquidity cap binds (-inf when it never binds).
double liquidity_cap_breakpoint(const MarketState& market, double l_max, double staking_rate);

// Coefficients of the closed-form response. For single-slope markets only
// alpha1/beta1 are meaningful; lambda1 == lambda2 == beta2 above target.
struct ResponseCoefficients {
    bool two_slope = false;
    bool below_target = false;
    double alpha1 = 0.0;
    double beta1 = 0.0;
    double alpha2 = 0.0;
    double beta2 = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double kink_exposure = 0.0;
};

ResponseCoefficients response_coefficients(const MarketState& market, double l_max, double staking_rate);

// Controller step: r_target *= exp(k_p * error(u_last) * (t_now - t_last)).
AdaptiveIrm advance_adaptive_rate(const AdaptiveIrm& irm, double u_now, Timestamp t_now);

}  // namespace loopy
