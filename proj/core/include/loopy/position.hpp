#pragma once

// Position algebra on a single market: (collateral, debt) <-> (exposure,
// leverage) <-> (unleveraged, max-leveraged) split at a leverage cap.

#include "loopy/irm.hpp"

namespace loopy {

struct CollateralDebt {
    double collateral = 0.0;
    double debt = 0.0;
};

struct ExposureLeverage {
    double exposure = 0.0;
    double leverage = 1.0;
};

// Exposure split into a pure staking sleeve and a sleeve levered at l_max.
struct SplitPosition {
    double unleveraged = 0.0;
    double max_leveraged = 0.0;
    double l_max = 5.0;

    double exposure() const noexcept { return unleveraged + max_leveraged; }
};

ExposureLeverage to_exposure_leverage(const CollateralDebt& cd);
CollateralDebt to_collateral_debt(const ExposureLeverage& el);

SplitPosition split(const ExposureLeverage& el, double l_max);
ExposureLeverage unsplit(const SplitPosition& sp);

double max_leverage_bound(double max_ltv);

// Strict collateralization: debt / collateral < max_ltv - safety_margin.
void check_collateralization(const CollateralDebt& cd, double max_ltv, double safety_margin = 0.0);

// leverage <= 1 / (1 - (max_ltv - safety_margin)).
void check_leverage(const ExposureLeverage& el, double max_ltv, double safety_margin = 0.0);

// Instantaneous cash flow of an (x, l) position: x l s - B rate(B), B = x (l - 1).
double direct_cash_flow(const MarketState& market, const ExposureLeverage& el, double staking_rate);

// Same cash flow evaluated on the split representation.
double split_cash_flow(const MarketState& market, const SplitPosition& sp, double staking_rate);

}  // namespace loopy
