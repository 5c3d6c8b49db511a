#include "loopy/position.hpp"

#include "loopy/errors.hpp"

#include <cmath>
#include <sstream>

namespace loopy {
namespace {

void require(bool ok, const char* what) {
    if (!ok) throw DomainError(what);
}

double interest(const MarketState& market, double debt) {
    if (debt <= 0.0) return 0.0;
    return debt * borrow_rate(market.irm(), market.supplied(), market.borrowed(), debt);
}

}  // namespace

ExposureLeverage to_exposure_leverage(const CollateralDebt& cd) {
    require(std::isfinite(cd.collateral) && std::isfinite(cd.debt), "position values must be finite");
    require(cd.debt >= 0.0, "debt must be non-negative");
    if (cd.collateral <= cd.debt) {
        std::ostringstream msg;
        msg << "insolvent position: collateral " << cd.collateral << " <= debt " << cd.debt;
        throw InsolventPositionError(msg.str());
    }
    const double x = cd.collateral - cd.debt;
    return {x, cd.collateral / x};
}

CollateralDebt to_collateral_debt(const ExposureLeverage& el) {
    require(std::isfinite(el.exposure) && el.exposure > 0.0, "exposure must be positive");
    require(std::isfinite(el.leverage) && el.leverage >= 1.0, "leverage must be at least 1");
    return {el.exposure * el.leverage, el.exposure * (el.leverage - 1.0)};
}

SplitPosition split(const ExposureLeverage& el, double l_max) {
    require(std::isfinite(l_max) && l_max > 1.0, "l_max must exceed 1");
    require(std::isfinite(el.exposure) && el.exposure >= 0.0, "exposure must be non-negative");
    require(std::isfinite(el.leverage) && el.leverage >= 1.0, "leverage must be at least 1");
    if (el.leverage > l_max) {
        std::ostringstream msg;
        msg << "leverage " << el.leverage << " exceeds cap " << l_max;
        throw ConstraintError(msg.str());
    }
    const double span = l_max - 1.0;
    return {el.exposure * (l_max - el.leverage) / span, el.exposure * (el.leverage - 1.0) / span, l_max};
}

ExposureLeverage unsplit(const SplitPosition& sp) {
    require(std::isfinite(sp.l_max) && sp.l_max > 1.0, "l_max must exceed 1");
    require(sp.unleveraged >= 0.0 && sp.max_leveraged >= 0.0, "split sleeves must be non-negative");
    const double x = sp.unleveraged + sp.max_leveraged;
    if (!(x > 0.0)) throw DomainError("leverage undefined for an empty position");
    return {x, (sp.unleveraged + sp.l_max * sp.max_leveraged) / x};
}

double max_leverage_bound(double max_ltv) {
    require(std::isfinite(max_ltv) && max_ltv > 0.0 && max_ltv < 1.0, "max_ltv must lie in (0, 1)");
    return 1.0 / (1.0 - max_ltv);
}

void check_collateralization(const CollateralDebt& cd, double max_ltv, double safety_margin) {
    require(safety_margin >= 0.0 && safety_margin < max_ltv, "safety margin must lie in [0, max_ltv)");
    require(cd.collateral > 0.0, "collateral must be positive");
    const double ltv = cd.debt / cd.collateral;
    if (!(ltv < max_ltv - safety_margin)) {
        std::ostringstream msg;
        msg << "loan-to-value " << ltv << " not below " << max_ltv - safety_margin;
        throw ConstraintError(msg.str());
    }
}

void check_leverage(const ExposureLeverage& el, double max_ltv, double safety_margin) {
    require(safety_margin >= 0.0 && safety_margin < max_ltv, "safety margin must lie in [0, max_ltv)");
    const double bound = max_leverage_bound(max_ltv - safety_margin);
    if (el.leverage > bound) {
        std::ostringstream msg;
        msg << "leverage " << el.leverage << " exceeds bound " << bound;
        throw ConstraintError(msg.str());
    }
}

double direct_cash_flow(const MarketState& market, const ExposureLeverage& el, double staking_rate) {
    const double debt = el.exposure * (el.leverage - 1.0);
    return el.exposure * el.leverage * staking_rate - interest(market, debt);
}

double split_cash_flow(const MarketState& market, const SplitPosition& sp, double staking_rate) {
    const double debt = sp.max_leveraged * (sp.l_max - 1.0);
    return sp.unleveraged * staking_rate + sp.max_leveraged * sp.l_max * staking_rate - interest(market, debt);
}

}  // namespace loopy
